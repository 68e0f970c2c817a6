//! Physical model: TLS parameters, dipole–dipole couplings, drive pulses,
//! and the time-dependent Hamiltonian they assemble into.
//!
//! All public frequencies are ordinary frequencies in GHz and times are in
//! ns; Hamiltonians come out in angular units (rad/ns), i.e. every GHz value
//! is multiplied by 2π on the way in. ħ = 1 throughout.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hilbert::{
    self, embed_site_operator, hilbert_dim, HilbertError, OperatorMatrix,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("TLS {index}: energy splitting must be positive")]
    ZeroEnergyTls { index: usize },
    #[error("TLS {index}: tunneling amplitude must be non-negative")]
    NegativeDelta { index: usize },
    #[error("TLS {index}: mixing angle must lie in [0, pi)")]
    MixingAngleOutOfRange { index: usize },
    #[error("ensemble needs at least one TLS")]
    EmptyEnsemble,
    #[error("coupling matrix is {rows}x{cols}, expected {n}x{n}")]
    CouplingShape { rows: usize, cols: usize, n: usize },
    #[error("coupling matrix asymmetric at ({i}, {j})")]
    CouplingAsymmetric { i: usize, j: usize },
    #[error("coupling diagonal must be exactly zero (site {i})")]
    CouplingDiagonalNonzero { i: usize },
    #[error("collective decay rate must be non-negative, got {gamma}")]
    NegativeGamma { gamma: f64 },
    #[error("range [{lo}, {hi}] is not ordered")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("pulse {index}: duration must be positive")]
    NonPositiveDuration { index: usize },
    #[error("pulse {index}: amplitude must be non-negative")]
    NegativeAmplitude { index: usize },
    #[error("pulse {index}: ramp fraction must lie in [0, 0.5]")]
    RampFractionOutOfRange { index: usize },
    #[error("pulses {index} and {} overlap or are out of order", index + 1)]
    PulsesOverlap { index: usize },
    #[error("sample step must be positive, got {step}")]
    NonPositiveSampleStep { step: f64 },
    #[error("t_end {t_end} precedes the last pulse end {last_end}")]
    TEndBeforeLastPulse { t_end: f64, last_end: f64 },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Ordinary frequency in GHz to angular rad/ns.
pub fn angular(f_ghz: f64) -> f64 {
    TAU * f_ghz
}

/// Single-TLS parameters in the position basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsParams {
    /// Energy detuning ε in GHz.
    pub epsilon: f64,
    /// Tunneling amplitude Δ in GHz (non-negative).
    pub delta: f64,
    /// Dimensionless dipole scale p.
    pub dipole_scale: f64,
}

impl TlsParams {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            dipole_scale: 1.0,
        }
    }

    /// A symmetric TLS (ε = 0) with bare transition frequency `freq` GHz, so
    /// the mixing angle is π/2 and the dipole couples purely through σx.
    pub fn bare(freq: f64) -> Self {
        Self::new(0.0, freq)
    }

    pub fn with_dipole(mut self, dipole_scale: f64) -> Self {
        self.dipole_scale = dipole_scale;
        self
    }

    /// Energy splitting `E = sqrt(ε² + Δ²)` in GHz.
    pub fn energy(&self) -> f64 {
        self.epsilon.hypot(self.delta)
    }

    /// Mixing angle `θ = atan2(Δ, ε)` in `[0, π)` for valid parameters.
    pub fn mixing_angle(&self) -> f64 {
        self.delta.atan2(self.epsilon)
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.delta < 0.0 {
            return Err(ModelError::NegativeDelta { index });
        }
        if !(self.energy() > 0.0) {
            return Err(ModelError::ZeroEnergyTls { index });
        }
        // δ = 0 with ε < 0 would put the mixing angle at exactly π.
        if self.delta == 0.0 && self.epsilon < 0.0 {
            return Err(ModelError::MixingAngleOutOfRange { index });
        }
        Ok(())
    }
}

/// The full physical model: per-TLS parameters, symmetric coupling matrix
/// J_ij (GHz, zero diagonal), and the collective decay rate Γ (GHz).
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    tls: Vec<TlsParams>,
    coupling: Array2<f64>,
    gamma: f64,
    seed: Option<u64>,
}

impl EnsembleSpec {
    pub fn new(tls: Vec<TlsParams>, coupling: Array2<f64>, gamma: f64) -> Result<Self> {
        if tls.is_empty() {
            return Err(ModelError::EmptyEnsemble);
        }
        let n = tls.len();
        hilbert_dim(n)?;
        for (index, params) in tls.iter().enumerate() {
            params.validate(index)?;
        }
        let (rows, cols) = coupling.dim();
        if rows != n || cols != n {
            return Err(ModelError::CouplingShape { rows, cols, n });
        }
        for i in 0..n {
            if coupling[(i, i)] != 0.0 {
                return Err(ModelError::CouplingDiagonalNonzero { i });
            }
            for j in (i + 1)..n {
                if (coupling[(i, j)] - coupling[(j, i)]).abs() > 1e-12 {
                    return Err(ModelError::CouplingAsymmetric { i, j });
                }
            }
        }
        if gamma < 0.0 {
            return Err(ModelError::NegativeGamma { gamma });
        }
        Ok(Self {
            tls,
            coupling,
            gamma,
            seed: None,
        })
    }

    /// Bare TLS at the given frequencies with no dipole–dipole coupling.
    pub fn uncoupled(freqs: &[f64], gamma: f64) -> Result<Self> {
        let tls = freqs.iter().map(|&f| TlsParams::bare(f)).collect();
        let n = freqs.len();
        Self::new(tls, Array2::zeros((n, n)), gamma)
    }

    /// Two bare TLS with a single transverse coupling `j` GHz.
    pub fn pair(freq1: f64, freq2: f64, j: f64, gamma: f64) -> Result<Self> {
        let mut coupling = Array2::zeros((2, 2));
        coupling[(0, 1)] = j;
        coupling[(1, 0)] = j;
        Self::new(vec![TlsParams::bare(freq1), TlsParams::bare(freq2)], coupling, gamma)
    }

    pub fn n_sites(&self) -> usize {
        self.tls.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.tls.len()
    }

    pub fn tls(&self) -> &[TlsParams] {
        &self.tls
    }

    pub fn coupling(&self) -> &Array2<f64> {
        &self.coupling
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Pulse envelope shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Square,
    /// Square pulse with raised-cosine edges over `ramp_fraction · duration`
    /// at each end. `ramp_fraction` must lie in [0, 0.5].
    SquareCosineRamp { ramp_fraction: f64 },
}

/// Default ramp fraction for the square–cosine envelope.
pub const DEFAULT_RAMP_FRACTION: f64 = 0.05;

impl Envelope {
    /// Envelope value in [0, 1] at `t` for a pulse on [start, start+duration).
    fn value(&self, t: f64, start: f64, duration: f64) -> f64 {
        let s = (t - start) / duration;
        if !(0.0..1.0).contains(&s) {
            return 0.0;
        }
        match *self {
            Envelope::Square => 1.0,
            Envelope::SquareCosineRamp { ramp_fraction: r } => {
                if r == 0.0 {
                    1.0
                } else if s < r {
                    0.5 * (1.0 - (std::f64::consts::PI * s / r).cos())
                } else if s > 1.0 - r {
                    0.5 * (1.0 - (std::f64::consts::PI * (1.0 - s) / r).cos())
                } else {
                    1.0
                }
            }
        }
    }
}

/// One carrier pulse. The carrier phase is referenced to global t = 0, so a
/// per-pulse `carrier_phase` offset is exactly the relative phase Δφ used in
/// two-pulse phase sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub envelope: Envelope,
    /// Drive amplitude A in GHz (A/2π of the angular amplitude).
    pub amplitude: f64,
    /// Carrier frequency ω_d/2π in GHz.
    pub carrier_freq: f64,
    /// Carrier phase offset in radians.
    pub carrier_phase: f64,
    /// Pulse start in ns.
    pub start: f64,
    /// Pulse duration τ in ns.
    pub duration: f64,
}

impl PulseSpec {
    pub fn square(amplitude: f64, carrier_freq: f64, start: f64, duration: f64) -> Self {
        Self {
            envelope: Envelope::Square,
            amplitude,
            carrier_freq,
            carrier_phase: 0.0,
            start,
            duration,
        }
    }

    pub fn square_cosine(amplitude: f64, carrier_freq: f64, start: f64, duration: f64) -> Self {
        Self {
            envelope: Envelope::SquareCosineRamp {
                ramp_fraction: DEFAULT_RAMP_FRACTION,
            },
            amplitude,
            carrier_freq,
            carrier_phase: 0.0,
            start,
            duration,
        }
    }

    pub fn with_phase(mut self, carrier_phase: f64) -> Self {
        self.carrier_phase = carrier_phase;
        self
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(ModelError::NonPositiveDuration { index });
        }
        if self.amplitude < 0.0 {
            return Err(ModelError::NegativeAmplitude { index });
        }
        if let Envelope::SquareCosineRamp { ramp_fraction } = self.envelope {
            if !(0.0..=0.5).contains(&ramp_fraction) {
                return Err(ModelError::RampFractionOutOfRange { index });
            }
        }
        Ok(())
    }
}

/// An ordered, non-overlapping pulse train plus the output sampling grid and
/// local-oscillator settings used downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveProtocol {
    pulses: Vec<PulseSpec>,
    /// End of the simulated window in ns.
    pub t_end: f64,
    /// Output grid spacing in ns.
    pub sample_step: f64,
    /// Local-oscillator frequency in GHz.
    pub lo_freq: f64,
    /// Local-oscillator phase in radians.
    pub lo_phase: f64,
}

/// Default output grid spacing: 0.25 ns (2 GHz Nyquist for baseband work).
pub const DEFAULT_SAMPLE_STEP: f64 = 0.25;

impl DriveProtocol {
    pub fn new(
        pulses: Vec<PulseSpec>,
        t_end: f64,
        sample_step: f64,
        lo_freq: f64,
        lo_phase: f64,
    ) -> Result<Self> {
        for (index, pulse) in pulses.iter().enumerate() {
            pulse.validate(index)?;
        }
        for index in 0..pulses.len().saturating_sub(1) {
            if pulses[index + 1].start < pulses[index].end() {
                return Err(ModelError::PulsesOverlap { index });
            }
        }
        if !(sample_step > 0.0) {
            return Err(ModelError::NonPositiveSampleStep { step: sample_step });
        }
        if let Some(last_end) = pulses.last().map(PulseSpec::end) {
            if t_end < last_end {
                return Err(ModelError::TEndBeforeLastPulse { t_end, last_end });
            }
        }
        Ok(Self {
            pulses,
            t_end,
            sample_step,
            lo_freq,
            lo_phase,
        })
    }

    /// Single pulse starting at t = 0, recorded for `post_time` ns after it
    /// ends, with the LO at the carrier frequency.
    pub fn single(pulse: PulseSpec, post_time: f64, sample_step: f64) -> Result<Self> {
        let t_end = pulse.end() + post_time;
        let lo_freq = pulse.carrier_freq;
        Self::new(vec![pulse], t_end, sample_step, lo_freq, 0.0)
    }

    pub fn pulses(&self) -> &[PulseSpec] {
        &self.pulses
    }

    pub fn last_pulse_end(&self) -> Option<f64> {
        self.pulses.last().map(PulseSpec::end)
    }

    /// Number of output samples on the uniform grid (t = 0 included).
    pub fn n_samples(&self) -> usize {
        (self.t_end / self.sample_step).floor() as usize + 1
    }

    /// Times where the drive envelope is non-smooth; the integrator restarts
    /// at these points.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut points = Vec::with_capacity(2 * self.pulses.len() + 2);
        points.push(0.0);
        for pulse in &self.pulses {
            points.push(pulse.start);
            points.push(pulse.end());
        }
        points.push(self.t_end);
        points.retain(|&t| (0.0..=self.t_end).contains(&t));
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
    }
}

/// Static Hamiltonian `H0 = Σ_j ½(2π E_j) σz_j + Σ_{i<j} (2π J_ij) σx_i σx_j`
/// in rad/ns.
pub fn static_hamiltonian(ens: &EnsembleSpec) -> Result<OperatorMatrix> {
    let n = ens.n_sites();
    let dim = ens.dim();
    let mut h = Array2::<C64>::zeros((dim, dim));
    for (j, params) in ens.tls().iter().enumerate() {
        let sz = embed_site_operator(&hilbert::sigma_z(), j, n)?;
        let w = 0.5 * angular(params.energy());
        h.scaled_add(C64::new(w, 0.0), sz.matrix());
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let jij = ens.coupling()[(i, j)];
            if jij == 0.0 {
                continue;
            }
            let sxi = embed_site_operator(&hilbert::sigma_x(), i, n)?;
            let sxj = embed_site_operator(&hilbert::sigma_x(), j, n)?;
            let prod = sxi.matrix().dot(sxj.matrix());
            h.scaled_add(C64::new(angular(jij), 0.0), &prod);
        }
    }
    Ok(OperatorMatrix::new(h)?)
}

/// Collective polarization operator
/// `P̂ = Σ_j p_j (cos θ_j σz_j + sin θ_j σx_j)` (dimensionless).
pub fn polarization_operator(ens: &EnsembleSpec) -> Result<OperatorMatrix> {
    let n = ens.n_sites();
    let dim = ens.dim();
    let mut p = Array2::<C64>::zeros((dim, dim));
    for (j, params) in ens.tls().iter().enumerate() {
        let theta = params.mixing_angle();
        let scale = params.dipole_scale;
        let sz = embed_site_operator(&hilbert::sigma_z(), j, n)?;
        let sx = embed_site_operator(&hilbert::sigma_x(), j, n)?;
        p.scaled_add(C64::new(scale * theta.cos(), 0.0), sz.matrix());
        p.scaled_add(C64::new(scale * theta.sin(), 0.0), sx.matrix());
    }
    Ok(OperatorMatrix::new(p)?)
}

/// Drive field at time `t` in angular units (rad/ns): the sum over active
/// pulses of `envelope(t) · (2π·amplitude) · cos(2π·carrier·t + phase)`.
/// Exactly zero outside every pulse window.
pub fn drive_field(protocol: &DriveProtocol, t: f64) -> f64 {
    let mut field = 0.0;
    for pulse in protocol.pulses() {
        let env = pulse.envelope.value(t, pulse.start, pulse.duration);
        if env == 0.0 {
            continue;
        }
        let phase = angular(pulse.carrier_freq) * t + pulse.carrier_phase;
        field += env * angular(pulse.amplitude) * phase.cos();
    }
    field
}

/// Full Hamiltonian `H(t) = H0 − P̂ · E(t)` in rad/ns; Hermitian at every t.
pub fn hamiltonian_at(ens: &EnsembleSpec, protocol: &DriveProtocol, t: f64) -> Result<OperatorMatrix> {
    let h0 = static_hamiltonian(ens)?;
    let p = polarization_operator(ens)?;
    let field = drive_field(protocol, t);
    Ok(&h0 - &(&p * field))
}

/// Draw an ensemble with bare frequencies uniform in `freq_range` (stored as
/// symmetric TLS: ε = 0, Δ = frequency) and pairwise couplings uniform in
/// `coupling_range`, symmetrized. Deterministic for a fixed seed: the N
/// frequencies are drawn in site order, then the couplings in row-major
/// (i < j) order.
pub fn sample_random_ensemble(
    n: usize,
    freq_range: (f64, f64),
    coupling_range: (f64, f64),
    gamma: f64,
    seed: u64,
) -> Result<EnsembleSpec> {
    if freq_range.1 < freq_range.0 {
        return Err(ModelError::InvalidRange {
            lo: freq_range.0,
            hi: freq_range.1,
        });
    }
    if coupling_range.1 < coupling_range.0 {
        return Err(ModelError::InvalidRange {
            lo: coupling_range.0,
            hi: coupling_range.1,
        });
    }
    if n == 0 {
        return Err(ModelError::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tls: Vec<TlsParams> = (0..n)
        .map(|_| TlsParams::bare(rng.random_range(freq_range.0..=freq_range.1)))
        .collect();
    let mut coupling = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let jij = rng.random_range(coupling_range.0..=coupling_range.1);
            coupling[(i, j)] = jij;
            coupling[(j, i)] = jij;
        }
    }
    let mut ens = EnsembleSpec::new(tls, coupling, gamma)?;
    ens.seed = Some(seed);
    Ok(ens)
}
