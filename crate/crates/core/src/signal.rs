//! Homodyne baseband synthesis and demodulation, amplitude/phase extraction,
//! FFT spectra, V-structure map assembly, slice extraction and averaging,
//! peak detection, and spectral-density estimation.
//!
//! Phase spectra are FFTs of the *wrapped* phase: a detuned emitter wraps as
//! a sawtooth and the sawtooth harmonics are the signal, so no unwrapping is
//! applied. Magnitudes are arbitrary units end to end; thresholds are always
//! caller-supplied configuration.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::evolve::TimeSeries;
use crate::model::DriveProtocol;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("emitter detuning {detuning} GHz exceeds the Nyquist frequency {nyquist} GHz")]
    Aliasing { detuning: f64, nyquist: f64 },
    #[error("sampling step {dt} ns cannot resolve the {freq} GHz carrier")]
    CarrierUnresolved { dt: f64, freq: f64 },
    #[error("low-pass cutoff {cutoff} GHz is not below the Nyquist frequency {nyquist} GHz")]
    CutoffAboveNyquist { cutoff: f64, nyquist: f64 },
    #[error("time grids do not match ({detail})")]
    GridMismatch { detail: String },
    #[error("FFT axes do not match across sweep columns")]
    AxisMismatch,
    #[error("sweep produced no columns")]
    EmptySweep,
    #[error("no FFT bin within {tolerance} MHz of zero frequency")]
    NoDcBin { tolerance: f64 },
    #[error("emitter decay must be non-negative, got {decay}")]
    NegativeDecay { decay: f64 },
    #[error("zero padding factor must be at least 1")]
    BadZeroPad,
    #[error("series is empty")]
    EmptySeries,
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("peak span has zero width")]
    ZeroWidthSpan,
    #[error("protocol has no pulses, so there is no zero-time reference")]
    NoPulses,
    #[error("grid (ends {t_last} ns) does not cover the pulse end at {t_off} ns")]
    GridDoesNotCoverPulseEnd { t_off: f64, t_last: f64 },
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Uniformly sampled real-valued series (amplitude, phase, populations).
#[derive(Debug, Clone, PartialEq)]
pub struct RealSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub label: String,
}

impl RealSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }
}

/// Baseband I/Q record with its local-oscillator metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTrace {
    pub t0: f64,
    pub dt: f64,
    pub i_samples: Vec<f64>,
    pub q_samples: Vec<f64>,
    /// LO frequency in GHz.
    pub lo_freq: f64,
    /// LO phase in radians.
    pub lo_phase: f64,
}

impl QuadratureTrace {
    pub fn len(&self) -> usize {
        self.i_samples.len()
    }

    pub fn z(&self, index: usize) -> C64 {
        C64::new(self.i_samples[index], self.q_samples[index])
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }
}

/// One damped emitter: weight `c`, frequency ω (GHz), decay γ (GHz, ≥ 0),
/// onset time (ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emitter {
    pub weight: C64,
    pub freq: f64,
    pub decay: f64,
    pub onset: f64,
}

/// A polychromatic set of damped emitters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmitterSet {
    pub emitters: Vec<Emitter>,
}

impl EmitterSet {
    pub fn new(emitters: Vec<Emitter>) -> Result<Self> {
        for e in &emitters {
            if e.decay < 0.0 {
                return Err(SignalError::NegativeDecay { decay: e.decay });
            }
        }
        Ok(Self { emitters })
    }
}

/// Uniform sampling grid starting at `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl SampleGrid {
    pub fn from_duration(duration: f64, dt: f64) -> Self {
        Self {
            t0: 0.0,
            dt,
            n: (duration / dt).floor() as usize + 1,
        }
    }
}

/// FFT window applied before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rect,
    Hann,
}

/// Column normalization of a spectral map. A "column" is one sweep point's
/// spectrum (a vertical cut in the usual sweep × FFT-frequency figure).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    PerColumnMax,
}

/// 2D grid of magnitudes over (sweep axis × FFT frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMap {
    pub sweep_label: String,
    pub sweep_values: Vec<f64>,
    /// FFT bins in MHz.
    pub freq_bins: Vec<f64>,
    /// `magnitudes[(i, k)]` is sweep point i, bin k.
    pub magnitudes: Array2<f64>,
    pub normalization: Normalization,
}

/// 2D grid of real values over (sweep axis × time).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub sweep_label: String,
    pub sweep_values: Vec<f64>,
    /// Times in ns.
    pub times: Vec<f64>,
    pub values: Array2<f64>,
}

/// 1D slice over a labelled axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice1D {
    pub label: String,
    pub axis_label: String,
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
}

/// One detected peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub freq: f64,
    pub magnitude: f64,
}

/// Peaks above a threshold with a minimum mutual separation, over a span.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
    pub threshold: f64,
    pub min_separation: f64,
    /// Span of the searched axis, in the axis units (GHz for slices over
    /// drive frequency).
    pub span: (f64, f64),
}

impl PeakSet {
    pub fn count(&self) -> usize {
        self.peaks.len()
    }
}

/// Synthesize the complex baseband signal of a damped polychromatic emitter
/// set against an LO at `lo_freq`/`lo_phase`:
/// `z(t) = Σ_k c_k · e^{−i(2π(ω_k−ω_LO)t + φ_LO)} · e^{−2πγ_k(t−onset_k)} · θ(t−onset_k)`.
pub fn synth_emitters(
    set: &EmitterSet,
    lo_freq: f64,
    lo_phase: f64,
    grid: SampleGrid,
) -> Result<QuadratureTrace> {
    let nyquist = 0.5 / grid.dt;
    for e in &set.emitters {
        let detuning = (e.freq - lo_freq).abs();
        if detuning >= nyquist {
            return Err(SignalError::Aliasing { detuning, nyquist });
        }
        if e.decay < 0.0 {
            return Err(SignalError::NegativeDecay { decay: e.decay });
        }
    }
    let mut i_samples = Vec::with_capacity(grid.n);
    let mut q_samples = Vec::with_capacity(grid.n);
    for k in 0..grid.n {
        let t = grid.t0 + k as f64 * grid.dt;
        let mut z = C64::new(0.0, 0.0);
        for e in &set.emitters {
            if t < e.onset {
                continue;
            }
            let phase = -(std::f64::consts::TAU * (e.freq - lo_freq) * t + lo_phase);
            let damp = (-std::f64::consts::TAU * e.decay * (t - e.onset)).exp();
            z += e.weight * C64::from_polar(damp, phase);
        }
        i_samples.push(z.re);
        q_samples.push(z.im);
    }
    Ok(QuadratureTrace {
        t0: grid.t0,
        dt: grid.dt,
        i_samples,
        q_samples,
        lo_freq,
        lo_phase,
    })
}

/// Mix a recorded field (real samples) or complex analytic signal such as
/// ⟨σ̂⁺⟩(t) down by the LO and zero-phase low-pass the result:
/// `z(t) = lowpass(x(t) · e^{−i(2π·ω_LO·t + φ_LO)})`.
///
/// The default cutoff is `lo_freq/4`, suppressing the 2ω image of a real
/// input and carrier-scale ripple of a complex one.
pub fn demodulate(
    field: &TimeSeries,
    lo_freq: f64,
    lo_phase: f64,
    lowpass_cutoff: Option<f64>,
) -> Result<QuadratureTrace> {
    if field.is_empty() {
        return Err(SignalError::EmptySeries);
    }
    let nyquist = 0.5 / field.dt;
    // A genuinely real field needs its carrier resolved; an all-zero record
    // is fine either way.
    let real_input = field.values.iter().all(|z| z.im == 0.0)
        && field.values.iter().any(|z| z.re != 0.0);
    if real_input && lo_freq >= nyquist {
        return Err(SignalError::CarrierUnresolved {
            dt: field.dt,
            freq: lo_freq,
        });
    }
    let cutoff = lowpass_cutoff.unwrap_or(lo_freq / 4.0);
    if cutoff >= nyquist {
        return Err(SignalError::CutoffAboveNyquist { cutoff, nyquist });
    }
    let mut z: Vec<C64> = field
        .values
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let t = field.time(k);
            x * C64::from_polar(1.0, -(std::f64::consts::TAU * lo_freq * t + lo_phase))
        })
        .collect();
    lowpass_zero_phase(&mut z, field.dt, cutoff);
    Ok(QuadratureTrace {
        t0: field.t0,
        dt: field.dt,
        i_samples: z.iter().map(|v| v.re).collect(),
        q_samples: z.iter().map(|v| v.im).collect(),
        lo_freq,
        lo_phase,
    })
}

/// Zero-phase low-pass: a first-order exponential smoother run forward and
/// backward, twice (four poles total, no group delay).
fn lowpass_zero_phase(z: &mut [C64], dt: f64, cutoff: f64) {
    let alpha = 1.0 - (-std::f64::consts::TAU * cutoff * dt).exp();
    for _ in 0..2 {
        let mut acc = z[0];
        for v in z.iter_mut() {
            acc += (*v - acc) * alpha;
            *v = acc;
        }
        let mut acc = z[z.len() - 1];
        for v in z.iter_mut().rev() {
            acc += (*v - acc) * alpha;
            *v = acc;
        }
    }
}

/// Instantaneous amplitude `√(I²+Q²)` and phase `atan2(Q, I)` wrapped to
/// `[0, 2π)`.
pub fn amp_phase(trace: &QuadratureTrace) -> (RealSeries, RealSeries) {
    let amplitude = trace
        .i_samples
        .iter()
        .zip(&trace.q_samples)
        .map(|(i, q)| i.hypot(*q))
        .collect();
    let phase = trace
        .i_samples
        .iter()
        .zip(&trace.q_samples)
        .map(|(i, q)| wrap_tau(q.atan2(*i)))
        .collect();
    (
        RealSeries {
            t0: trace.t0,
            dt: trace.dt,
            values: amplitude,
            label: "amplitude".into(),
        },
        RealSeries {
            t0: trace.t0,
            dt: trace.dt,
            values: phase,
            label: "phase".into(),
        },
    )
}

fn wrap_tau(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(std::f64::consts::TAU);
    if wrapped == std::f64::consts::TAU {
        0.0
    } else {
        wrapped
    }
}

/// Default floor below which the denominator coherence is considered lost.
pub const RELATIVE_PHASE_FLOOR: f64 = 1e-12;

/// Wrapped phase of the ratio of two coherences, `arg(c1/c2)` in `[0, 2π)`.
/// Samples where `|c2|` drops below `floor` are zeroed and their indices
/// reported alongside the series.
pub fn relative_phase(
    coh1: &TimeSeries,
    coh2: &TimeSeries,
    floor: f64,
) -> Result<(RealSeries, Vec<usize>)> {
    if coh1.len() != coh2.len() {
        return Err(SignalError::GridMismatch {
            detail: format!("lengths {} vs {}", coh1.len(), coh2.len()),
        });
    }
    if (coh1.t0 - coh2.t0).abs() > 1e-12 || (coh1.dt - coh2.dt).abs() > 1e-12 {
        return Err(SignalError::GridMismatch {
            detail: "origin or spacing differ".into(),
        });
    }
    let mut masked = Vec::new();
    let values = coh1
        .values
        .iter()
        .zip(&coh2.values)
        .enumerate()
        .map(|(k, (a, b))| {
            if b.norm() < floor {
                masked.push(k);
                0.0
            } else {
                wrap_tau((a / b).arg())
            }
        })
        .collect();
    Ok((
        RealSeries {
            t0: coh1.t0,
            dt: coh1.dt,
            values,
            label: "relative_phase".into(),
        },
        masked,
    ))
}

/// One-sided magnitude spectrum of a real series: mean removed, window
/// applied, zero-padded by `zero_pad_factor`. Bins are in MHz.
///
/// Applied to a wrapped phase this is the paper-style phase FFT; the same
/// transform serves amplitude and population spectra.
pub fn phase_fft(
    series: &RealSeries,
    window: Window,
    zero_pad_factor: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if series.is_empty() {
        return Err(SignalError::EmptySeries);
    }
    if zero_pad_factor == 0 {
        return Err(SignalError::BadZeroPad);
    }
    if let Some(index) = series.values.iter().position(|v| !v.is_finite()) {
        return Err(SignalError::NonFinite { index });
    }
    let n = series.len();
    let mean = series.values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<C64> = series
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = match window {
                Window::Rect => 1.0,
                Window::Hann => {
                    let x = std::f64::consts::TAU * k as f64 / (n as f64 - 1.0).max(1.0);
                    0.5 * (1.0 - x.cos())
                }
            };
            C64::new((v - mean) * w, 0.0)
        })
        .collect();
    let n_fft = n * zero_pad_factor;
    buf.resize(n_fft, C64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let n_bins = n_fft / 2 + 1;
    let bin_ghz = 1.0 / (n_fft as f64 * series.dt);
    let bins = (0..n_bins).map(|k| k as f64 * bin_ghz * 1e3).collect();
    let mags = buf[..n_bins].iter().map(|z| z.norm()).collect();
    Ok((bins, mags))
}

/// Stack per-sweep-point spectra into a map, optionally normalizing each
/// spectrum by its own maximum. Zero columns are left untouched by the
/// normalization.
pub fn build_map(
    sweep_label: &str,
    columns: &[(f64, (Vec<f64>, Vec<f64>))],
    normalization: Normalization,
) -> Result<SpectralMap> {
    if columns.is_empty() {
        return Err(SignalError::EmptySweep);
    }
    let freq_bins = columns[0].1 .0.clone();
    let n_bins = freq_bins.len();
    for (_, (bins, mags)) in columns {
        if bins.len() != n_bins || mags.len() != n_bins {
            return Err(SignalError::AxisMismatch);
        }
        if bins.iter().zip(&freq_bins).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(SignalError::AxisMismatch);
        }
    }
    let mut magnitudes = Array2::zeros((columns.len(), n_bins));
    for (i, (_, (_, mags))) in columns.iter().enumerate() {
        let scale = match normalization {
            Normalization::None => 1.0,
            Normalization::PerColumnMax => {
                let max = mags.iter().copied().fold(0.0, f64::max);
                if max > 0.0 {
                    1.0 / max
                } else {
                    1.0
                }
            }
        };
        for (k, v) in mags.iter().enumerate() {
            magnitudes[(i, k)] = v * scale;
        }
    }
    Ok(SpectralMap {
        sweep_label: sweep_label.to_string(),
        sweep_values: columns.iter().map(|(s, _)| *s).collect(),
        freq_bins,
        magnitudes,
        normalization,
    })
}

/// Magnitudes near zero FFT frequency, averaged over all bins with
/// `f ≤ tolerance` (MHz), as a slice over the sweep axis.
pub fn zero_frequency_slice(map: &SpectralMap, tolerance: f64) -> Result<Slice1D> {
    let selected: Vec<usize> = map
        .freq_bins
        .iter()
        .enumerate()
        .take_while(|(_, f)| **f <= tolerance + 1e-12)
        .map(|(k, _)| k)
        .collect();
    if selected.is_empty() {
        return Err(SignalError::NoDcBin { tolerance });
    }
    let values = map
        .sweep_values
        .iter()
        .enumerate()
        .map(|(i, _)| {
            selected
                .iter()
                .map(|&k| map.magnitudes[(i, k)])
                .sum::<f64>()
                / selected.len() as f64
        })
        .collect();
    Ok(Slice1D {
        label: "zero_frequency_slice".into(),
        axis_label: map.sweep_label.clone(),
        axis: map.sweep_values.clone(),
        values,
    })
}

/// The grid row at the first time at or after the protocol's final pulse
/// end, as a slice over the sweep axis.
pub fn zero_time_slice(grid: &TimeGrid, protocol: &DriveProtocol) -> Result<Slice1D> {
    let t_off = protocol.last_pulse_end().ok_or(SignalError::NoPulses)?;
    let t_last = *grid.times.last().ok_or(SignalError::EmptySeries)?;
    let column = grid
        .times
        .iter()
        .position(|&t| t >= t_off - 1e-9)
        .ok_or(SignalError::GridDoesNotCoverPulseEnd { t_off, t_last })?;
    Ok(Slice1D {
        label: "zero_time_slice".into(),
        axis_label: grid.sweep_label.clone(),
        axis: grid.sweep_values.clone(),
        values: (0..grid.sweep_values.len())
            .map(|i| grid.values[(i, column)])
            .collect(),
    })
}

/// Pointwise arithmetic mean of slices sharing one axis.
pub fn average_slices(slices: &[Slice1D]) -> Result<Slice1D> {
    let first = slices.first().ok_or(SignalError::EmptySweep)?;
    for s in slices {
        if s.axis.len() != first.axis.len()
            || s.axis
                .iter()
                .zip(&first.axis)
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(SignalError::AxisMismatch);
        }
    }
    let n = slices.len() as f64;
    let values = (0..first.axis.len())
        .map(|k| slices.iter().map(|s| s.values[k]).sum::<f64>() / n)
        .collect();
    Ok(Slice1D {
        label: "averaged_slice".into(),
        axis_label: first.axis_label.clone(),
        axis: first.axis.clone(),
        values,
    })
}

/// Strict local maxima above `threshold`, kept greedily in descending
/// magnitude subject to `min_separation` (axis units); ties break toward the
/// lower frequency. The returned peaks are sorted by frequency and the span
/// is the slice's axis extent.
pub fn detect_peaks(slice: &Slice1D, threshold: f64, min_separation: f64) -> Result<PeakSet> {
    if slice.axis.is_empty() {
        return Err(SignalError::EmptySeries);
    }
    let v = &slice.values;
    let mut candidates: Vec<Peak> = (1..v.len().saturating_sub(1))
        .filter(|&k| v[k] > threshold && v[k] > v[k - 1] && v[k] > v[k + 1])
        .map(|k| Peak {
            freq: slice.axis[k],
            magnitude: v[k],
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.freq.total_cmp(&b.freq))
    });
    let mut kept: Vec<Peak> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|p| (p.freq - c.freq).abs() >= min_separation)
        {
            kept.push(c);
        }
    }
    kept.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    Ok(PeakSet {
        peaks: kept,
        threshold,
        min_separation,
        span: (slice.axis[0], *slice.axis.last().unwrap()),
    })
}

/// Peak count per unit span width, in inverse axis units (GHz⁻¹ for
/// frequency slices).
pub fn spectral_density(peaks: &PeakSet) -> Result<f64> {
    let width = peaks.span.1 - peaks.span.0;
    if width <= 0.0 {
        return Err(SignalError::ZeroWidthSpan);
    }
    Ok(peaks.count() as f64 / width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn single_emitter(freq: f64, weight: f64, decay: f64) -> EmitterSet {
        EmitterSet::new(vec![Emitter {
            weight: C64::new(weight, 0.0),
            freq,
            decay,
            onset: 0.0,
        }])
        .unwrap()
    }

    #[test]
    fn resonant_undamped_emitter_has_constant_amplitude_and_phase() {
        let set = single_emitter(4.0, 0.8, 0.0);
        let grid = SampleGrid::from_duration(500.0, 0.25);
        let trace = synth_emitters(&set, 4.0, 0.3, grid).unwrap();
        let (amp, phase) = amp_phase(&trace);
        let (a0, p0) = (amp.values[0], phase.values[0]);
        for (a, p) in amp.values.iter().zip(&phase.values) {
            assert_abs_diff_eq!(*a, a0, epsilon = 1e-10);
            assert_abs_diff_eq!(*p, p0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(a0, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn detuned_emitter_phase_is_sawtooth_at_detuning() {
        // 10 MHz detuning: the wrapped phase ramps and wraps by 2π every
        // 100 ns, and its FFT peaks at 10 MHz.
        let set = single_emitter(4.01, 1.0, 0.0);
        let grid = SampleGrid::from_duration(2000.0, 0.25);
        let trace = synth_emitters(&set, 4.0, 0.0, grid).unwrap();
        let (_, phase) = amp_phase(&trace);
        let wraps = phase
            .values
            .windows(2)
            .filter(|w| (w[1] - w[0]).abs() > std::f64::consts::PI)
            .count();
        assert_eq!(wraps, 20); // 2000 ns · 10 MHz
        let (bins, mags) = phase_fft(&phase, Window::Rect, 4).unwrap();
        let peak_bin = mags
            .iter()
            .enumerate()
            .skip(1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_abs_diff_eq!(bins[peak_bin], 10.0, epsilon = 0.3);
    }

    #[test]
    fn three_emitters_beat_at_pairwise_detunings() {
        let set = EmitterSet::new(vec![
            Emitter {
                weight: C64::new(1.0, 0.0),
                freq: 4.00,
                decay: 0.0,
                onset: 0.0,
            },
            Emitter {
                weight: C64::new(0.8, 0.1),
                freq: 4.05,
                decay: 0.0,
                onset: 0.0,
            },
            Emitter {
                weight: C64::new(0.6, -0.2),
                freq: 4.12,
                decay: 0.0,
                onset: 0.0,
            },
        ])
        .unwrap();
        let grid = SampleGrid::from_duration(4000.0, 0.25);
        let trace = synth_emitters(&set, 4.0, 0.0, grid).unwrap();
        let (amp, _) = amp_phase(&trace);
        let (bins, mags) = phase_fft(&amp, Window::Rect, 4).unwrap();
        let slice = Slice1D {
            label: "amp_fft".into(),
            axis_label: "freq".into(),
            axis: bins,
            values: mags,
        };
        let max = slice.values.iter().copied().fold(0.0, f64::max);
        let peaks = detect_peaks(&slice, 0.05 * max, 10.0).unwrap();
        // Pairwise detunings: 50, 70, 120 MHz.
        for expect in [50.0, 70.0, 120.0] {
            assert!(
                peaks.peaks.iter().any(|p| (p.freq - expect).abs() < 1.0),
                "missing beat at {expect} MHz in {:?}",
                peaks.peaks
            );
        }
    }

    #[test]
    fn synth_rejects_aliased_emitters() {
        let set = single_emitter(7.0, 1.0, 0.0);
        let grid = SampleGrid::from_duration(100.0, 0.25); // Nyquist 2 GHz
        assert!(matches!(
            synth_emitters(&set, 4.0, 0.0, grid),
            Err(SignalError::Aliasing { .. })
        ));
    }

    #[test]
    fn demodulate_pure_cosine_gives_dc_quadratures() {
        // cos(2π·4t): after mixing at 4 GHz and low-passing, I → ½, Q → 0.
        let dt = 0.01;
        let n = 20_000;
        let values: Vec<C64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                C64::new((std::f64::consts::TAU * 4.0 * t).cos(), 0.0)
            })
            .collect();
        let field = TimeSeries {
            t0: 0.0,
            dt,
            values,
            label: "field".into(),
        };
        let trace = demodulate(&field, 4.0, 0.0, None).unwrap();
        let mid = trace.len() / 2;
        for k in mid - 100..mid + 100 {
            assert_abs_diff_eq!(trace.i_samples[k], 0.5, epsilon = 0.01);
            assert_abs_diff_eq!(trace.q_samples[k], 0.0, epsilon = 0.01);
        }
    }

    #[test]
    fn demodulate_analytic_signal_at_lo_is_constant() {
        // A positive-frequency analytic signal e^{+i2πft} (the rotation sense
        // of ⟨σ̂⁺⟩) demodulated at f gives a constant z.
        let dt = 0.02;
        let n = 10_000;
        let f = 4.0;
        let values: Vec<C64> = (0..n)
            .map(|k| C64::from_polar(1.0, std::f64::consts::TAU * f * (k as f64 * dt)))
            .collect();
        let field = TimeSeries {
            t0: 0.0,
            dt,
            values,
            label: "coh".into(),
        };
        let trace = demodulate(&field, f, 0.0, None).unwrap();
        let mid = trace.len() / 2;
        for k in mid - 50..mid + 50 {
            assert_abs_diff_eq!(trace.i_samples[k], 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(trace.q_samples[k], 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn demodulate_rejects_bad_cutoff_and_unresolved_carrier() {
        let field = TimeSeries {
            t0: 0.0,
            dt: 0.25,
            values: vec![C64::new(1.0, 0.0); 64],
            label: "x".into(),
        };
        assert!(matches!(
            demodulate(&field, 1.0, 0.0, Some(3.0)),
            Err(SignalError::CutoffAboveNyquist { .. })
        ));
        assert!(matches!(
            demodulate(&field, 4.0, 0.0, None),
            Err(SignalError::CarrierUnresolved { .. })
        ));
    }

    #[test]
    fn amp_phase_conventions() {
        let trace = QuadratureTrace {
            t0: 0.0,
            dt: 1.0,
            i_samples: vec![1.0, 0.0],
            q_samples: vec![0.0, -1.0],
            lo_freq: 4.0,
            lo_phase: 0.0,
        };
        let (amp, phase) = amp_phase(&trace);
        assert_abs_diff_eq!(amp.values[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(phase.values[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(amp.values[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            phase.values[1],
            1.5 * std::f64::consts::PI,
            epsilon = 1e-15
        );
    }

    #[test]
    fn relative_phase_of_identical_series_is_zero() {
        let values: Vec<C64> = (0..100)
            .map(|k| C64::from_polar(1.0, 0.1 * k as f64))
            .collect();
        let series = TimeSeries {
            t0: 0.0,
            dt: 0.25,
            values,
            label: "c".into(),
        };
        let (phase, masked) = relative_phase(&series, &series, RELATIVE_PHASE_FLOOR).unwrap();
        assert!(masked.is_empty());
        assert!(phase.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relative_phase_ramp_and_masking() {
        let delta = 0.02; // GHz
        let dt = 0.25;
        let c2: Vec<C64> = (0..200)
            .map(|k| {
                if k == 77 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(0.7, 0.1)
                }
            })
            .collect();
        let c1: Vec<C64> = c2
            .iter()
            .enumerate()
            .map(|(k, z)| {
                z * C64::from_polar(1.0, -std::f64::consts::TAU * delta * (k as f64 * dt))
            })
            .collect();
        let s1 = TimeSeries {
            t0: 0.0,
            dt,
            values: c1,
            label: "c1".into(),
        };
        let s2 = TimeSeries {
            t0: 0.0,
            dt,
            values: c2,
            label: "c2".into(),
        };
        let (phase, masked) = relative_phase(&s1, &s2, RELATIVE_PHASE_FLOOR).unwrap();
        assert_eq!(masked, vec![77]);
        // Wrapped linear ramp at δ: successive differences are 2πδ·dt mod 2π.
        let expect_step = std::f64::consts::TAU * delta * dt;
        for k in 1..60 {
            if k == 77 || k == 78 {
                continue;
            }
            let diff = phase.values[k - 1] - phase.values[k];
            assert_abs_diff_eq!(
                diff.rem_euclid(std::f64::consts::TAU),
                expect_step,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn constant_phase_has_only_dc() {
        let series = RealSeries {
            t0: 0.0,
            dt: 0.25,
            values: vec![1.234; 512],
            label: "phase".into(),
        };
        let (_, mags) = phase_fft(&series, Window::Rect, 1).unwrap();
        // Mean removal empties every bin, including DC.
        assert!(mags.iter().all(|&m| m < 1e-10));
    }

    #[test]
    fn parseval_consistency_rect_no_padding() {
        let mut values = Vec::with_capacity(1024);
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..1024 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            values.push(((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0);
        }
        let series = RealSeries {
            t0: 0.0,
            dt: 0.25,
            values,
            label: "noise".into(),
        };
        let n = series.len();
        let mean = series.values.iter().sum::<f64>() / n as f64;
        let time_energy: f64 = series.values.iter().map(|v| (v - mean).powi(2)).sum();
        let (_, mags) = phase_fft(&series, Window::Rect, 1).unwrap();
        // One-sided spectrum: double the interior bins.
        let mut spec_energy = mags[0].powi(2) + mags[n / 2].powi(2);
        for m in &mags[1..n / 2] {
            spec_energy += 2.0 * m.powi(2);
        }
        spec_energy /= n as f64;
        assert!(
            ((spec_energy - time_energy) / time_energy).abs() < 1e-8,
            "Parseval mismatch: {spec_energy} vs {time_energy}"
        );
    }

    #[test]
    fn map_normalization_and_errors() {
        let col = |s: f64, peak: usize, scale: f64| {
            let bins: Vec<f64> = (0..8).map(|k| k as f64).collect();
            let mut mags = vec![0.1 * scale; 8];
            mags[peak] = scale;
            (s, (bins, mags))
        };
        let columns = vec![col(1.0, 2, 5.0), col(2.0, 4, 9.0)];
        let map = build_map("sweep", &columns, Normalization::PerColumnMax).unwrap();
        for i in 0..2 {
            let row_max = (0..8).map(|k| map.magnitudes[(i, k)]).fold(0.0, f64::max);
            assert_abs_diff_eq!(row_max, 1.0, epsilon = 1e-12);
        }
        assert!(matches!(
            build_map("sweep", &[], Normalization::None),
            Err(SignalError::EmptySweep)
        ));
        let mut bad = columns.clone();
        (bad[1].1 .0)[3] = 99.0;
        assert!(matches!(
            build_map("sweep", &bad, Normalization::None),
            Err(SignalError::AxisMismatch)
        ));
    }

    #[test]
    fn dc_slice_averages_bins_within_tolerance() {
        let bins = vec![0.0, 2.0, 4.0, 6.0];
        let columns = vec![
            (1.0, (bins.clone(), vec![1.0, 3.0, 100.0, 100.0])),
            (2.0, (bins.clone(), vec![2.0, 4.0, 100.0, 100.0])),
        ];
        let map = build_map("sweep", &columns, Normalization::None).unwrap();
        // Tolerance spanning two bins averages them.
        let slice = zero_frequency_slice(&map, 2.0).unwrap();
        assert_abs_diff_eq!(slice.values[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(slice.values[1], 3.0, epsilon = 1e-12);
        // Constant map gives a constant slice.
        let flat = vec![
            (1.0, (bins.clone(), vec![5.0; 4])),
            (2.0, (bins.clone(), vec![5.0; 4])),
        ];
        let map = build_map("sweep", &flat, Normalization::None).unwrap();
        let slice = zero_frequency_slice(&map, 0.0).unwrap();
        assert!(slice.values.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn single_emitter_v_apex_sits_at_emitter_frequency() {
        // Sweep the LO across an emitter at 4.2 GHz; the near-DC content of
        // the phase FFT must peak when the LO hits the emitter, regardless of
        // the emitter weight.
        for weight in [0.3, 2.0] {
            let set = single_emitter(4.2, weight, 0.001);
            let grid = SampleGrid::from_duration(1000.0, 0.25);
            let sweep: Vec<f64> = (0..41).map(|k| 4.0 + k as f64 * 0.01).collect();
            let mut columns = Vec::new();
            for &lo in &sweep {
                let trace = synth_emitters(&set, lo, 0.0, grid).unwrap();
                let (_, phase) = amp_phase(&trace);
                let spectrum = phase_fft(&phase, Window::Rect, 4).unwrap();
                columns.push((lo, spectrum));
            }
            let map = build_map("lo_freq", &columns, Normalization::None).unwrap();
            // Tolerance of one pre-padding bin (four padded bins).
            let raw_bin_mhz = 1e3 / 1000.0;
            let slice = zero_frequency_slice(&map, raw_bin_mhz).unwrap();
            let apex = slice
                .values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!(
                (slice.axis[apex] - 4.2).abs() < 0.0101,
                "apex at {} for weight {weight}",
                slice.axis[apex]
            );
        }
    }

    #[test]
    fn zero_time_slice_reads_post_pulse_column() {
        use crate::model::PulseSpec;
        let protocol = DriveProtocol::new(
            vec![PulseSpec::square(0.1, 4.0, 0.0, 100.0)],
            200.0,
            0.25,
            4.0,
            0.0,
        )
        .unwrap();
        let times: Vec<f64> = (0..801).map(|k| k as f64 * 0.25).collect();
        let sweep = vec![1.0, 2.0, 3.0];
        let mut values = Array2::zeros((3, times.len()));
        for (i, s) in sweep.iter().enumerate() {
            for (k, t) in times.iter().enumerate() {
                values[(i, k)] = s * t;
            }
        }
        let grid = TimeGrid {
            sweep_label: "amp".into(),
            sweep_values: sweep,
            times,
            values,
        };
        let slice = zero_time_slice(&grid, &protocol).unwrap();
        assert_abs_diff_eq!(slice.values[0], 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(slice.values[2], 300.0, epsilon = 1e-12);
    }

    #[test]
    fn averaging_slices_and_noise_suppression() {
        let axis: Vec<f64> = (0..200).map(|k| 4.0 + k as f64 * 0.005).collect();
        let slice = |vals: Vec<f64>| Slice1D {
            label: "s".into(),
            axis_label: "freq".into(),
            axis: axis.clone(),
            values: vals,
        };
        let a = slice(vec![1.0; 200]);
        assert_eq!(
            average_slices(&[a.clone(), a.clone()]).unwrap().values,
            a.values
        );
        let b = slice(vec![-1.0; 200]);
        assert!(average_slices(&[a.clone(), b])
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));

        // Planted peak with independent noise: averaging M slices shrinks the
        // noise floor roughly by √M.
        let mut state = 42u64;
        let mut noise = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 30) as f64) - 1.0
        };
        let mut make = || {
            let mut vals: Vec<f64> = (0..200).map(|_| noise()).collect();
            vals[100] += 30.0;
            slice(vals)
        };
        let singles: Vec<Slice1D> = (0..16).map(|_| make()).collect();
        let averaged = average_slices(&singles).unwrap();
        let floor = |s: &Slice1D| {
            s.values
                .iter()
                .enumerate()
                .filter(|(k, _)| (*k as i64 - 100).abs() > 3)
                .map(|(_, v)| v * v)
                .sum::<f64>()
                .sqrt()
        };
        let ratio = floor(&singles[0]) / floor(&averaged);
        assert!(ratio > 2.5, "noise suppression ratio {ratio}");
    }

    #[test]
    fn detect_peaks_counts_and_separation() {
        // 42 planted peaks across a 0.5 GHz span.
        let n = 1001;
        let axis: Vec<f64> = (0..n)
            .map(|k| 4.1 + 0.5 * k as f64 / (n - 1) as f64)
            .collect();
        let mut values = vec![10.0; n];
        let positions: Vec<usize> = (0..42).map(|p| 12 + p * 23).collect();
        for &p in &positions {
            values[p] = 200.0;
        }
        let slice = Slice1D {
            label: "density".into(),
            axis_label: "freq".into(),
            axis,
            values,
        };
        let peaks = detect_peaks(&slice, 120.0, 0.002).unwrap();
        assert_eq!(peaks.count(), 42);
        let density = spectral_density(&peaks).unwrap();
        assert_abs_diff_eq!(density, 84.0, epsilon = 1e-12);

        // All below threshold: empty set is fine.
        let flat = Slice1D {
            label: "flat".into(),
            axis_label: "freq".into(),
            axis: (0..10).map(|k| k as f64).collect(),
            values: vec![1.0; 10],
        };
        assert_eq!(detect_peaks(&flat, 5.0, 0.1).unwrap().count(), 0);

        // Two maxima closer than the separation: only the larger survives.
        let close = Slice1D {
            label: "close".into(),
            axis_label: "freq".into(),
            axis: (0..7).map(|k| k as f64 * 0.001).collect(),
            values: vec![0.0, 5.0, 0.0, 0.0, 8.0, 0.0, 0.0],
        };
        let peaks = detect_peaks(&close, 1.0, 0.005).unwrap();
        assert_eq!(peaks.count(), 1);
        assert_abs_diff_eq!(peaks.peaks[0].magnitude, 8.0, epsilon = 1e-15);
    }

    #[test]
    fn spectral_density_arithmetic() {
        let peaks = PeakSet {
            peaks: (0..10)
                .map(|k| Peak {
                    freq: k as f64 * 0.2,
                    magnitude: 1.0,
                })
                .collect(),
            threshold: 0.5,
            min_separation: 0.01,
            span: (0.0, 2.0),
        };
        assert_abs_diff_eq!(spectral_density(&peaks).unwrap(), 5.0, epsilon = 1e-15);
        let degenerate = PeakSet {
            span: (1.0, 1.0),
            ..peaks
        };
        assert!(matches!(
            spectral_density(&degenerate),
            Err(SignalError::ZeroWidthSpan)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn amplitude_invariant_under_lo_phase(phase in 0.0f64..std::f64::consts::TAU) {
            let set = single_emitter(4.05, 1.3, 0.002);
            let grid = SampleGrid::from_duration(100.0, 0.25);
            let base = synth_emitters(&set, 4.0, 0.0, grid).unwrap();
            let shifted = synth_emitters(&set, 4.0, phase, grid).unwrap();
            let (a0, _) = amp_phase(&base);
            let (a1, _) = amp_phase(&shifted);
            for (x, y) in a0.values.iter().zip(&a1.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn peak_detection_scale_covariance(scale in 0.1f64..50.0) {
            let axis: Vec<f64> = (0..64).map(|k| k as f64 * 0.01).collect();
            let mut values = vec![1.0; 64];
            values[10] = 9.0;
            values[30] = 7.0;
            values[50] = 5.0;
            let slice = Slice1D { label: "s".into(), axis_label: "f".into(), axis: axis.clone(), values: values.clone() };
            let scaled = Slice1D { label: "s".into(), axis_label: "f".into(), axis, values: values.iter().map(|v| v * scale).collect() };
            let p1 = detect_peaks(&slice, 2.0, 0.05).unwrap();
            let p2 = detect_peaks(&scaled, 2.0 * scale, 0.05).unwrap();
            prop_assert_eq!(p1.count(), p2.count());
            for (a, b) in p1.peaks.iter().zip(&p2.peaks) {
                prop_assert_eq!(a.freq, b.freq);
            }
        }

        #[test]
        fn normalization_preserves_peak_locations(seed in 0u64..1000) {
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            let mut rng = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) as f64 / (1u64 << 31) as f64
            };
            let bins: Vec<f64> = (0..32).map(|k| k as f64).collect();
            let columns: Vec<(f64, (Vec<f64>, Vec<f64>))> = (0..4)
                .map(|i| {
                    let mags: Vec<f64> = (0..32).map(|_| rng() + 0.01).collect();
                    (i as f64, (bins.clone(), mags))
                })
                .collect();
            let raw = build_map("s", &columns, Normalization::None).unwrap();
            let norm = build_map("s", &columns, Normalization::PerColumnMax).unwrap();
            for i in 0..4 {
                let argmax = |m: &SpectralMap| {
                    (0..32).max_by(|&a, &b| m.magnitudes[(i, a)].total_cmp(&m.magnitudes[(i, b)])).unwrap()
                };
                prop_assert_eq!(argmax(&raw), argmax(&norm));
            }
        }
    }
}
