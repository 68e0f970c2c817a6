//! Adaptive Dormand–Prince 5(4) integrator with a continuous (dense-output)
//! extension, for complex vector- and matrix-valued states.
//!
//! Grid samples are produced by evaluating the quartic interpolant of each
//! accepted step, never by snapping step endpoints to the output grid. The
//! lab-frame problems in this crate oscillate at the microwave carrier, so
//! steps are small but cheap; FSAL keeps it at six function evaluations per
//! accepted step.

use ndarray::{Array, Dimension};
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (requested tolerance not achievable)")]
    StepSizeUnderflow { t: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error("sample time {t} outside integration window [{t0}, {t1}]")]
    SampleOutOfWindow { t: f64, t0: f64, t1: f64 },
}

pub type Result<T> = std::result::Result<T, OdeError>;

/// Integrator controls. `rtol`/`atol` follow the usual per-component scaled
/// error norm.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Optional cap on the step size, e.g. a fraction of the carrier period.
    pub h_max: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 20_000_000,
            h_max: None,
        }
    }
}

impl OdeOptions {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

/// State operations the stepper needs; implemented for any complex ndarray.
pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;
    /// `self += a · other`
    fn axpy(&mut self, a: f64, other: &Self);
    /// Scaled RMS error norm used for step acceptance.
    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64;
    /// RMS of |self| / (atol + rtol·|reference|), for the initial step guess.
    fn scaled_rms(&self, reference: &Self, rtol: f64, atol: f64) -> f64;
    fn max_abs_diff(a: &Self, b: &Self) -> f64;
}

impl<D: Dimension> OdeState for Array<C64, D> {
    fn zeros_like(&self) -> Self {
        Array::zeros(self.raw_dim())
    }

    fn axpy(&mut self, a: f64, other: &Self) {
        self.scaled_add(C64::new(a, 0.0), other);
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        let mut acc = 0.0;
        for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
            let scale = atol + rtol * a.norm().max(b.norm());
            let r = e.norm() / scale;
            acc += r * r;
        }
        (acc / err.len() as f64).sqrt()
    }

    fn scaled_rms(&self, reference: &Self, rtol: f64, atol: f64) -> f64 {
        let mut acc = 0.0;
        for (v, r) in self.iter().zip(reference.iter()) {
            let scale = atol + rtol * r.norm();
            let x = v.norm() / scale;
            acc += x * x;
        }
        (acc / self.len() as f64).sqrt()
    }

    fn max_abs_diff(a: &Self, b: &Self) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// b − b̂ (5th minus embedded 4th order weights).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Continuous extension of one accepted step over `[t0, t0 + h]`.
struct DenseSegment<S> {
    t0: f64,
    h: f64,
    cont: [S; 5],
}

impl<S: OdeState> DenseSegment<S> {
    fn eval(&self, t: f64) -> S {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        // cont1 + θ(cont2 + (1−θ)(cont3 + θ(cont4 + (1−θ)cont5)))
        let mut inner = self.cont[3].clone();
        inner.axpy(theta1, &self.cont[4]);
        let mut mid = self.cont[2].clone();
        mid.axpy(theta, &inner);
        let mut outer = self.cont[1].clone();
        outer.axpy(theta1, &mid);
        let mut y = self.cont[0].clone();
        y.axpy(theta, &outer);
        y
    }
}

/// Integrate `dy/dt = rhs(t, y)` from `t0` to `t1`, returning the state at
/// `t1` and dense-output samples at the (ascending, in-window) `sample_times`.
pub fn integrate<S, F>(
    rhs: &mut F,
    t0: f64,
    t1: f64,
    y0: S,
    opts: &OdeOptions,
    sample_times: &[f64],
) -> Result<(S, Vec<S>)>
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
{
    assert!(t1 >= t0, "integration window must run forward");
    for &ts in sample_times {
        if !(t0..=t1).contains(&ts) {
            return Err(OdeError::SampleOutOfWindow { t: ts, t0, t1 });
        }
    }
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;
    // Zero-length window: every requested sample is y0.
    if t1 == t0 {
        samples.resize(sample_times.len(), y0.clone());
        return Ok((y0, samples));
    }
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        samples.push(y0.clone());
        next_sample += 1;
    }

    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    let mut h = initial_step(rhs, t, &y, &k1, span, opts);
    if let Some(h_max) = opts.h_max {
        h = h.min(h_max);
    }
    let mut n_steps = 0usize;

    while t < t1 {
        n_steps += 1;
        if n_steps > opts.max_steps {
            return Err(OdeError::MaxStepsExceeded {
                t,
                max_steps: opts.max_steps,
            });
        }
        if h < 1e-14 * span.max(1.0) {
            return Err(OdeError::StepSizeUnderflow { t });
        }
        if t + h > t1 {
            h = t1 - t;
        }

        // Stage evaluations.
        let mut ys = y.clone();
        ys.axpy(h * A21, &k1);
        let k2 = rhs(t + C2 * h, &ys);

        let mut ys = y.clone();
        ys.axpy(h * A31, &k1);
        ys.axpy(h * A32, &k2);
        let k3 = rhs(t + C3 * h, &ys);

        let mut ys = y.clone();
        ys.axpy(h * A41, &k1);
        ys.axpy(h * A42, &k2);
        ys.axpy(h * A43, &k3);
        let k4 = rhs(t + C4 * h, &ys);

        let mut ys = y.clone();
        ys.axpy(h * A51, &k1);
        ys.axpy(h * A52, &k2);
        ys.axpy(h * A53, &k3);
        ys.axpy(h * A54, &k4);
        let k5 = rhs(t + C5 * h, &ys);

        let mut ys = y.clone();
        ys.axpy(h * A61, &k1);
        ys.axpy(h * A62, &k2);
        ys.axpy(h * A63, &k3);
        ys.axpy(h * A64, &k4);
        ys.axpy(h * A65, &k5);
        let k6 = rhs(t + h, &ys);

        let mut y1 = y.clone();
        y1.axpy(h * A71, &k1);
        y1.axpy(h * A73, &k3);
        y1.axpy(h * A74, &k4);
        y1.axpy(h * A75, &k5);
        y1.axpy(h * A76, &k6);
        let k7 = rhs(t + h, &y1);

        let mut err = k1.zeros_like();
        err.axpy(h * E1, &k1);
        err.axpy(h * E3, &k3);
        err.axpy(h * E4, &k4);
        err.axpy(h * E5, &k5);
        err.axpy(h * E6, &k6);
        err.axpy(h * E7, &k7);

        let err_norm = S::error_norm(&err, &y, &y1, opts.rtol, opts.atol);

        if err_norm <= 1.0 {
            // Accepted: build the dense segment, emit any covered samples.
            if next_sample < sample_times.len() && sample_times[next_sample] <= t + h {
                let mut ydiff = y1.clone();
                ydiff.axpy(-1.0, &y);
                // cont3 = h·k1 − ydiff, cont4 = ydiff − h·k7 − cont3
                let mut cont3 = ydiff.zeros_like();
                cont3.axpy(h, &k1);
                cont3.axpy(-1.0, &ydiff);
                let mut cont4 = ydiff.clone();
                cont4.axpy(-h, &k7);
                cont4.axpy(-1.0, &cont3);
                let mut cont5 = ydiff.zeros_like();
                cont5.axpy(h * D1, &k1);
                cont5.axpy(h * D3, &k3);
                cont5.axpy(h * D4, &k4);
                cont5.axpy(h * D5, &k5);
                cont5.axpy(h * D6, &k6);
                cont5.axpy(h * D7, &k7);
                let segment = DenseSegment {
                    t0: t,
                    h,
                    cont: [y.clone(), ydiff, cont3, cont4, cont5],
                };
                while next_sample < sample_times.len() && sample_times[next_sample] <= t + h {
                    samples.push(segment.eval(sample_times[next_sample]));
                    next_sample += 1;
                }
            }

            t += h;
            y = y1;
            k1 = k7; // FSAL
            let fac = (err_norm.max(1e-16)).powf(0.2);
            let mut h_new = h * (SAFETY / fac).clamp(FAC_MIN, FAC_MAX);
            if let Some(h_max) = opts.h_max {
                h_new = h_new.min(h_max);
            }
            h = h_new;
        } else {
            let fac = err_norm.powf(0.2);
            h *= (SAFETY / fac).clamp(FAC_MIN, 1.0);
        }
    }

    // Samples exactly at t1 that were not covered by the loop (can happen
    // only through floating-point representation of the window end).
    while next_sample < sample_times.len() {
        samples.push(y.clone());
        next_sample += 1;
    }

    Ok((y, samples))
}

/// Standard initial step-size heuristic (two trial evaluations).
fn initial_step<S, F>(rhs: &mut F, t0: f64, y0: &S, f0: &S, span: f64, opts: &OdeOptions) -> f64
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
{
    let d0 = y0.scaled_rms(y0, opts.rtol, opts.atol);
    let d1 = f0.scaled_rms(y0, opts.rtol, opts.atol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * (d0 / d1)
    };
    let h0 = h0.min(span);
    let mut y1 = y0.clone();
    y1.axpy(h0, f0);
    let f1 = rhs(t0 + h0, &y1);
    let mut df = f1;
    df.axpy(-1.0, f0);
    let d2 = df.scaled_rms(y0, opts.rtol, opts.atol) / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d_max).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}
