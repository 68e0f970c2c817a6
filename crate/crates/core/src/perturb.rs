//! Closed-form weak-drive excitation amplitude for two coupled TLS in the
//! single-excitation subspace, with an independent numerical Dyson-series
//! oracle that validates it order by order in the coupling.
//!
//! Conventions: amplitudes are written in the frame where every term carries
//! `e^{−iω₁t}`; the rotating-wave drive vertex is `(Ω/2)e^{−iω_d t}` from
//! `|gg⟩` into either single-excitation state, and the coupling J hops the
//! excitation between the two TLS. All three orders in J (0, 1, 2) are kept
//! at first order in Ω.

use ndarray::{array, Array1, Array2};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::evolve::{evolve_state_fn, EvolveError, TimeSeries};
use crate::model::angular;
use crate::signal::{
    build_map, phase_fft, relative_phase, Normalization, SampleGrid, SignalError, SpectralMap,
    Window, RELATIVE_PHASE_FLOOR,
};

/// Denominators within this of zero (GHz) are degenerate.
pub const DEGENERACY_GUARD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error(
        "degenerate denominator: {name} = {value} GHz is within {DEGENERACY_GUARD} of zero; \
         nudge the parameters away from the resonance"
    )]
    DegenerateDenominator { name: &'static str, value: f64 },
    #[error("drive amplitude must be non-negative, got {amp}")]
    NegativeAmplitude { amp: f64 },
    #[error("quadrature not converged: refining the step still moves results by {change:.3e}")]
    QuadratureNotConverged { change: f64 },
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

pub type Result<T> = std::result::Result<T, PerturbError>;

/// Two coupled TLS under a weak drive: frequencies and amplitudes in GHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbParams {
    pub omega1: f64,
    pub omega2: f64,
    pub omega_d: f64,
    /// Drive amplitude Ω in GHz.
    pub drive_amp: f64,
    /// Coupling J in GHz.
    pub coupling: f64,
}

impl PerturbParams {
    /// δ = ω₁ − ω₂ in GHz.
    pub fn delta(&self) -> f64 {
        self.omega1 - self.omega2
    }

    /// δ₁ = ω₁ − ω_d in GHz.
    pub fn delta1(&self) -> f64 {
        self.omega1 - self.omega_d
    }

    /// δ₂ = ω₂ − ω_d in GHz.
    pub fn delta2(&self) -> f64 {
        self.omega2 - self.omega_d
    }

    /// Swap the two TLS: the same closed form then yields the second TLS's
    /// excitation amplitude.
    pub fn swapped(&self) -> Self {
        Self {
            omega1: self.omega2,
            omega2: self.omega1,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if self.drive_amp < 0.0 {
            return Err(PerturbError::NegativeAmplitude {
                amp: self.drive_amp,
            });
        }
        let checks = [
            ("delta", self.delta()),
            ("delta1", self.delta1()),
            ("delta2", self.delta2()),
            ("delta+delta1", self.delta() + self.delta1()),
        ];
        for (name, value) in checks {
            if value.abs() < DEGENERACY_GUARD {
                return Err(PerturbError::DegenerateDenominator { name, value });
            }
        }
        Ok(())
    }
}

/// `F(x, t) = ∫₀ᵗ e^{ixs} ds = (e^{ixt} − 1)/(ix)` for angular `x`.
fn phase_integral(x: f64, t: f64) -> C64 {
    (C64::from_polar(1.0, x * t) - 1.0) / C64::new(0.0, x)
}

/// The three J-orders of `c_eg(t)`, each including its power of J:
/// `[O(J⁰), O(J¹), O(J²)]`, summing to [`c_eg_analytic`].
pub fn c_eg_terms(params: &PerturbParams, t: f64) -> Result<[C64; 3]> {
    params.validate()?;
    let omega = angular(params.drive_amp);
    let j = angular(params.coupling);
    let d = angular(params.delta());
    let d1 = angular(params.delta1());
    let d2 = angular(params.delta2());
    let carrier = C64::from_polar(1.0, -angular(params.omega1) * t);
    let half = 0.5 * omega;
    let i = C64::new(0.0, 1.0);

    let f_d1 = phase_integral(d1, t);
    let f_d = phase_integral(d, t);

    // Zeroth order: direct off-resonant driving of TLS 1.
    let a0 = -i * half * f_d1;
    // First order: drive TLS 2, hop once.
    let a1 = -(half / (i * d2)) * (f_d1 - f_d);
    // Second order: two hops; the K integral.
    let k_integral = (1.0 / (i * d1))
        * ((1.0 / (i * d2)) * (f_d1 - f_d) + (1.0 / (i * d)) * (C64::new(t, 0.0) - f_d));
    let a2 = i * half * k_integral;

    Ok([carrier * a0, carrier * (j * a1), carrier * (j * j * a2)])
}

/// Closed-form excitation amplitude of the first TLS to second order in J
/// and first order in Ω.
pub fn c_eg_analytic(params: &PerturbParams, t: f64) -> Result<C64> {
    let [t0, t1, t2] = c_eg_terms(params, t)?;
    Ok(t0 + t1 + t2)
}

/// Numerically integrated time-ordered series and its J-order decomposition
/// on a uniform output grid.
#[derive(Debug, Clone)]
pub struct DysonSeries {
    pub t0: f64,
    pub dt: f64,
    /// `orders[k][n]` is the O(Jᵏ) amplitude at sample n (J power included).
    pub orders: [Vec<C64>; 3],
    /// Sum of the three orders.
    pub total: Vec<C64>,
}

/// Quadrature step bound: `0.01 / max angular frequency`.
fn quadrature_step_limit(params: &PerturbParams) -> f64 {
    let fastest = angular(params.delta().abs())
        .max(angular(params.delta1().abs()))
        .max(angular(params.delta2().abs()))
        .max(1e-3);
    0.01 / fastest
}

/// Integrate the time-ordered perturbation series to second order in J by
/// progressive trapezoidal quadrature on a refined grid, in the same
/// rotating-frame conventions as [`c_eg_analytic`]. The result is checked by
/// halving the quadrature step; residual change above 1e−6 is an error.
pub fn dyson_oracle(params: &PerturbParams, grid: SampleGrid) -> Result<DysonSeries> {
    params.validate()?;
    let h_max = quadrature_step_limit(params);
    let refine = (grid.dt / h_max).ceil().max(1.0) as usize;
    let coarse = dyson_pass(params, grid, refine);
    let fine = dyson_pass(params, grid, 2 * refine);
    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for (a, b) in coarse.total.iter().zip(&fine.total) {
        worst = worst.max((a - b).norm());
        scale = scale.max(b.norm());
    }
    if worst >= 1e-6 * scale.max(1.0) {
        return Err(PerturbError::QuadratureNotConverged { change: worst });
    }
    Ok(fine)
}

fn dyson_pass(params: &PerturbParams, grid: SampleGrid, refine: usize) -> DysonSeries {
    let omega = angular(params.drive_amp);
    let j = angular(params.coupling);
    let d = angular(params.delta());
    let d1 = angular(params.delta1());
    let d2 = angular(params.delta2());
    let half = 0.5 * omega;
    let i = C64::new(0.0, 1.0);

    let h = grid.dt / refine as f64;
    let n_fine = (grid.n - 1) * refine + 1;
    let time = |k: usize| grid.t0 + k as f64 * h;

    // Progressive trapezoidal integral of `f` over the fine grid.
    let cumint = |f: &dyn Fn(usize) -> C64| -> Vec<C64> {
        let mut out = Vec::with_capacity(n_fine);
        let mut acc = C64::new(0.0, 0.0);
        let mut prev = f(0);
        out.push(acc);
        for k in 1..n_fine {
            let cur = f(k);
            acc += 0.5 * h * (prev + cur);
            out.push(acc);
            prev = cur;
        }
        out
    };

    let a0: Vec<C64> = cumint(&|k| C64::from_polar(1.0, d1 * time(k)))
        .into_iter()
        .map(|v| -i * half * v)
        .collect();
    let b0: Vec<C64> = cumint(&|k| C64::from_polar(1.0, d2 * time(k)))
        .into_iter()
        .map(|v| -i * half * v)
        .collect();
    let a1: Vec<C64> = cumint(&|k| b0[k] * C64::from_polar(1.0, d * time(k)))
        .into_iter()
        .map(|v| -i * v)
        .collect();
    let b1: Vec<C64> = cumint(&|k| a0[k] * C64::from_polar(1.0, -d * time(k)))
        .into_iter()
        .map(|v| -i * v)
        .collect();
    let a2: Vec<C64> = cumint(&|k| b1[k] * C64::from_polar(1.0, d * time(k)))
        .into_iter()
        .map(|v| -i * v)
        .collect();

    let mut orders: [Vec<C64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut total = Vec::with_capacity(grid.n);
    for out_idx in 0..grid.n {
        let k = out_idx * refine;
        let carrier = C64::from_polar(1.0, -angular(params.omega1) * time(k));
        let o0 = carrier * a0[k];
        let o1 = carrier * (j * a1[k]);
        let o2 = carrier * (j * j * a2[k]);
        orders[0].push(o0);
        orders[1].push(o1);
        orders[2].push(o2);
        total.push(o0 + o1 + o2);
    }
    DysonSeries {
        t0: grid.t0,
        dt: grid.dt,
        orders,
        total,
    }
}

/// The rotating-wave Hamiltonian on `{|gg⟩, |eg⟩, |ge⟩}` in rad/ns, for
/// non-perturbative reference solutions of the same model.
pub fn single_excitation_hamiltonian(params: &PerturbParams) -> impl Fn(f64) -> Array2<C64> {
    let omega1 = angular(params.omega1);
    let omega2 = angular(params.omega2);
    let omega_d = angular(params.omega_d);
    let half = 0.5 * angular(params.drive_amp);
    let j = angular(params.coupling);
    move |t: f64| {
        let up = C64::from_polar(half, omega_d * t);
        let dn = up.conj();
        array![
            [C64::new(0.0, 0.0), up, up],
            [dn, C64::new(omega1, 0.0), C64::new(j, 0.0)],
            [dn, C64::new(j, 0.0), C64::new(omega2, 0.0)]
        ]
    }
}

/// Full (non-perturbative) excitation amplitude of the first TLS from a
/// Schrödinger solve of the single-excitation model, sampled on `grid`.
pub fn c_eg_full(params: &PerturbParams, grid: SampleGrid, tol: f64) -> Result<Vec<C64>> {
    let h = single_excitation_hamiltonian(params);
    let psi0: Array1<C64> = array![
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0)
    ];
    let times: Vec<f64> = (0..grid.n).map(|k| grid.t0 + k as f64 * grid.dt).collect();
    let t_end = *times.last().unwrap_or(&grid.t0);
    let samples = evolve_state_fn(&h, psi0, grid.t0, t_end, &times, tol)?;
    Ok(samples.into_iter().map(|psi| psi[1]).collect())
}

/// Per-drive-frequency analytic coherence phases, FFT'd and stacked into a
/// per-column-normalized map: the closed-form counterpart of the simulated
/// relative-phase V maps.
pub fn analytic_phase_spectrum(
    base: &PerturbParams,
    drive_freqs: &[f64],
    grid: SampleGrid,
    window: Window,
    zero_pad_factor: usize,
) -> Result<SpectralMap> {
    let mut columns = Vec::with_capacity(drive_freqs.len());
    for &omega_d in drive_freqs {
        let params = PerturbParams { omega_d, ..*base };
        let series = |p: &PerturbParams| -> Result<TimeSeries> {
            let values = (0..grid.n)
                .map(|k| c_eg_analytic(p, grid.t0 + k as f64 * grid.dt))
                .collect::<Result<Vec<C64>>>()?;
            Ok(TimeSeries {
                t0: grid.t0,
                dt: grid.dt,
                values,
                label: "c".into(),
            })
        };
        let c1 = series(&params)?;
        let c2 = series(&params.swapped())?;
        let (phi, _masked) = relative_phase(&c1, &c2, RELATIVE_PHASE_FLOOR)?;
        let spectrum = phase_fft(&phi, window, zero_pad_factor)?;
        columns.push((omega_d, spectrum));
    }
    Ok(build_map(
        "drive_freq",
        &columns,
        Normalization::PerColumnMax,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::zero_frequency_slice;
    use approx::assert_abs_diff_eq;

    fn weak_params() -> PerturbParams {
        PerturbParams {
            omega1: 3.0,
            omega2: 4.0,
            omega_d: 3.3,
            drive_amp: 0.001,
            coupling: 0.005,
        }
    }

    fn rel_l2(a: &[C64], b: &[C64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
        num / den
    }

    #[test]
    fn amplitude_vanishes_at_t_zero() {
        let c = c_eg_analytic(&weak_params(), 0.0).unwrap();
        assert_abs_diff_eq!(c.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn decoupled_limit_is_the_direct_drive_term() {
        let params = PerturbParams {
            coupling: 0.0,
            ..weak_params()
        };
        for t in [13.0, 55.5, 170.25] {
            let c = c_eg_analytic(&params, t).unwrap();
            // Literal re-evaluation of (Ω/2)e^{−iω₁t}(1−e^{iδ₁t})/δ₁.
            let omega = angular(params.drive_amp);
            let d1 = angular(params.delta1());
            let expect = C64::from_polar(0.5 * omega, -angular(params.omega1) * t)
                * (C64::new(1.0, 0.0) - C64::from_polar(1.0, d1 * t))
                / d1;
            assert!((c - expect).norm() < 1e-15 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn degenerate_denominators_are_rejected() {
        let mut p = weak_params();
        p.omega_d = p.omega1;
        assert!(matches!(
            c_eg_analytic(&p, 1.0),
            Err(PerturbError::DegenerateDenominator { name: "delta1", .. })
        ));
        let mut p = weak_params();
        p.omega2 = p.omega1;
        assert!(matches!(
            c_eg_analytic(&p, 1.0),
            Err(PerturbError::DegenerateDenominator { name: "delta", .. })
        ));
        let mut p = weak_params();
        p.omega_d = 2.0 * p.omega1 - p.omega2; // δ + δ₁ = 0
        assert!(matches!(
            c_eg_analytic(&p, 1.0),
            Err(PerturbError::DegenerateDenominator {
                name: "delta+delta1",
                ..
            })
        ));
    }

    #[test]
    fn oracle_matches_decoupled_closed_form() {
        let params = PerturbParams {
            coupling: 0.0,
            ..weak_params()
        };
        let grid = SampleGrid::from_duration(200.0, 0.5);
        let oracle = dyson_oracle(&params, grid).unwrap();
        let analytic: Vec<C64> = (0..grid.n)
            .map(|k| c_eg_analytic(&params, k as f64 * grid.dt).unwrap())
            .collect();
        assert!(rel_l2(&oracle.total, &analytic) < 1e-6);
    }

    #[test]
    fn oracle_orders_scale_with_coupling() {
        let grid = SampleGrid::from_duration(100.0, 0.5);
        let base = weak_params();
        let doubled = PerturbParams {
            coupling: 2.0 * base.coupling,
            ..base
        };
        let o1 = dyson_oracle(&base, grid).unwrap();
        let o2 = dyson_oracle(&doubled, grid).unwrap();
        let k = grid.n - 1;
        let lin = o2.orders[1][k].norm() / o1.orders[1][k].norm();
        let quad = o2.orders[2][k].norm() / o1.orders[2][k].norm();
        assert_abs_diff_eq!(lin, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(quad, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn analytic_orders_match_oracle_orders() {
        let params = weak_params();
        let grid = SampleGrid::from_duration(200.0, 0.5);
        let oracle = dyson_oracle(&params, grid).unwrap();
        for order in 0..3 {
            let analytic: Vec<C64> = (0..grid.n)
                .map(|k| c_eg_terms(&params, k as f64 * grid.dt).unwrap()[order])
                .collect();
            let err = rel_l2(&oracle.orders[order], &analytic);
            assert!(err < 1e-5, "order {order} mismatch: relative L2 {err}");
        }
        let analytic_total: Vec<C64> = (0..grid.n)
            .map(|k| c_eg_analytic(&params, k as f64 * grid.dt).unwrap())
            .collect();
        assert!(rel_l2(&oracle.total, &analytic_total) < 0.01);
    }

    #[test]
    fn halving_drive_amplitude_shrinks_full_solver_error_fourfold() {
        // The analytic form is first order in Ω, so its distance to the full
        // single-excitation solve scales as Ω³ plus an Ω·J³ truncation term;
        // a small J keeps the latter out of the way of the Ω² scaling.
        let grid = SampleGrid::from_duration(200.0, 1.0);
        let err_at = |amp: f64| {
            let params = PerturbParams {
                drive_amp: amp,
                coupling: 0.0005,
                ..weak_params()
            };
            let full = c_eg_full(&params, grid, 1e-12).unwrap();
            let analytic: Vec<C64> = (0..grid.n)
                .map(|k| c_eg_analytic(&params, k as f64 * grid.dt).unwrap())
                .collect();
            full.iter()
                .zip(&analytic)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let e1 = err_at(0.002);
        let e2 = err_at(0.001);
        assert!(
            e1 / e2 >= 4.0,
            "error reduction {} below second-order expectation",
            e1 / e2
        );
    }

    #[test]
    fn phase_spectrum_has_v_bases_at_bare_frequencies() {
        let base = weak_params();
        // Offset grid: never lands exactly on a bare resonance.
        let sweep: Vec<f64> = (0..81).map(|k| 2.5125 + k as f64 * 0.025).collect();
        let grid = SampleGrid::from_duration(400.0, 0.25);
        let map = analytic_phase_spectrum(&base, &sweep, grid, Window::Rect, 4).unwrap();
        // Near-DC aggregation over one pre-padding bin.
        let slice = zero_frequency_slice(&map, 1e3 / 400.0).unwrap();
        let peaks =
            crate::signal::detect_peaks(&slice, 0.2 * slice.values.iter().cloned().fold(0.0, f64::max), 0.3)
                .unwrap();
        assert!(
            peaks.peaks.iter().any(|p| (p.freq - 3.0).abs() < 0.05),
            "no V base near 3.0 GHz: {:?}",
            peaks.peaks
        );
        assert!(
            peaks.peaks.iter().any(|p| (p.freq - 4.0).abs() < 0.05),
            "no V base near 4.0 GHz: {:?}",
            peaks.peaks
        );
    }

    #[test]
    fn coupling_adds_sideband_lines() {
        // A Hann window keeps the J-independent lines' leakage floor far
        // below the J-induced lines.
        let grid = SampleGrid::from_duration(400.0, 0.25);
        let sweep = [3.3];
        let strong = PerturbParams {
            coupling: 0.05,
            ..weak_params()
        };
        let coupled = analytic_phase_spectrum(&strong, &sweep, grid, Window::Hann, 2).unwrap();
        let bare = analytic_phase_spectrum(
            &PerturbParams {
                coupling: 0.0,
                ..strong
            },
            &sweep,
            grid,
            Window::Hann,
            2,
        )
        .unwrap();
        // Some bins light up only through the coupling; at those bins the
        // J = 0 spectrum sits below a 10×-lower detection threshold.
        let j_lines = (0..coupled.freq_bins.len())
            .filter(|&k| coupled.magnitudes[(0, k)] > 0.02 && bare.magnitudes[(0, k)] < 0.002)
            .count();
        assert!(j_lines > 0, "coupling produced no new spectral lines");
    }
}
