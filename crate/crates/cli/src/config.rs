//! Run configuration: a nested key-value (TOML) schema with every default
//! resolved up front and unknown keys rejected.

use serde::{Deserialize, Serialize};

use ringdown_core::experiments::{AnalysisOptions, SolverOptions, RECIPE_NAMES};
use ringdown_core::model::{
    DriveProtocol, EnsembleSpec, Envelope, PulseSpec, TlsParams, DEFAULT_RAMP_FRACTION,
};
use ringdown_core::signal::Window;

use crate::error::{CliError, Result};

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in recipe name for `sweep`; optional when a subcommand uses an
    /// inline model instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Multiplier on the default sweep resolutions (1.0 = full resolution).
    #[serde(default = "default_grid_scale")]
    pub grid_scale: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

fn default_seed() -> u64 {
    7
}

fn default_workers() -> usize {
    1
}

fn default_grid_scale() -> f64 {
    1.0
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            recipe: None,
            seed: default_seed(),
            workers: default_workers(),
            grid_scale: default_grid_scale(),
            solver: SolverConfig::default(),
            signal: SignalConfig::default(),
            model: None,
            protocol: None,
            perturb: None,
            synth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

fn default_rtol() -> f64 {
    SolverOptions::default().rtol
}

fn default_atol() -> f64 {
    SolverOptions::default().atol
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol: default_rtol(),
            atol: default_atol(),
        }
    }
}

impl SolverConfig {
    pub fn to_options(&self) -> SolverOptions {
        SolverOptions {
            rtol: self.rtol,
            atol: self.atol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    /// "rect" or "hann".
    #[serde(default = "default_window")]
    pub window: String,
    #[serde(default = "default_zero_pad")]
    pub zero_pad_factor: usize,
    /// Near-DC aggregation window in MHz; omitted means one pre-padding bin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_tolerance_mhz: Option<f64>,
    /// Peak threshold as a fraction of the slice maximum.
    #[serde(default = "default_peak_threshold_rel")]
    pub peak_threshold_rel: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation_ghz: f64,
    /// Demodulation low-pass cutoff in GHz; omitted means lo/4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowpass_cutoff_ghz: Option<f64>,
}

fn default_window() -> String {
    "rect".into()
}

fn default_zero_pad() -> usize {
    AnalysisOptions::default().zero_pad_factor
}

fn default_peak_threshold_rel() -> f64 {
    AnalysisOptions::default().peak_threshold_rel
}

fn default_min_separation() -> f64 {
    AnalysisOptions::default().min_separation
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            zero_pad_factor: default_zero_pad(),
            dc_tolerance_mhz: None,
            peak_threshold_rel: default_peak_threshold_rel(),
            min_separation_ghz: default_min_separation(),
            lowpass_cutoff_ghz: None,
        }
    }
}

impl SignalConfig {
    pub fn window(&self) -> Result<Window> {
        match self.window.as_str() {
            "rect" => Ok(Window::Rect),
            "hann" => Ok(Window::Hann),
            other => Err(CliError::Config(format!(
                "signal.window must be \"rect\" or \"hann\", got \"{other}\""
            ))),
        }
    }

    pub fn to_analysis(&self) -> Result<AnalysisOptions> {
        if self.zero_pad_factor == 0 {
            return Err(CliError::Config(
                "signal.zero_pad_factor must be at least 1".into(),
            ));
        }
        Ok(AnalysisOptions {
            window: self.window()?,
            zero_pad_factor: self.zero_pad_factor,
            dc_tolerance_mhz: self.dc_tolerance_mhz,
            peak_threshold_rel: self.peak_threshold_rel,
            min_separation: self.min_separation_ghz,
        })
    }
}

/// Inline physical model for `simulate` and `floquet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Bare transition frequencies, GHz (symmetric TLS).
    pub frequencies: Vec<f64>,
    /// Uniform pairwise coupling J, GHz.
    #[serde(default)]
    pub coupling: f64,
    /// Collective decay rate Γ, GHz.
    #[serde(default)]
    pub gamma: f64,
}

impl ModelConfig {
    pub fn to_ensemble(&self) -> Result<EnsembleSpec> {
        let n = self.frequencies.len();
        let tls: Vec<TlsParams> = self.frequencies.iter().map(|&f| TlsParams::bare(f)).collect();
        let mut coupling = ndarray_zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    coupling[(i, j)] = self.coupling;
                }
            }
        }
        Ok(EnsembleSpec::new(tls, coupling, self.gamma)?)
    }
}

fn ndarray_zeros(n: usize) -> ndarray::Array2<f64> {
    ndarray::Array2::zeros((n, n))
}

// ndarray is in scope through ringdown-core's public types.
use ringdown_core::ndarray;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// "square" or "square_cosine".
    #[serde(default = "default_envelope")]
    pub envelope: String,
    #[serde(default = "default_ramp_fraction")]
    pub ramp_fraction: f64,
    /// Drive amplitude A, GHz.
    pub amplitude: f64,
    /// Carrier frequency, GHz.
    pub carrier_freq: f64,
    /// Carrier phase, radians.
    #[serde(default)]
    pub carrier_phase: f64,
    /// Start time, ns.
    #[serde(default)]
    pub start: f64,
    /// Duration τ, ns.
    pub duration: f64,
}

fn default_envelope() -> String {
    "square".into()
}

fn default_ramp_fraction() -> f64 {
    DEFAULT_RAMP_FRACTION
}

impl PulseConfig {
    pub fn to_pulse(&self) -> Result<PulseSpec> {
        let envelope = match self.envelope.as_str() {
            "square" => Envelope::Square,
            "square_cosine" => Envelope::SquareCosineRamp {
                ramp_fraction: self.ramp_fraction,
            },
            other => {
                return Err(CliError::Config(format!(
                    "pulse.envelope must be \"square\" or \"square_cosine\", got \"{other}\""
                )))
            }
        };
        Ok(PulseSpec {
            envelope,
            amplitude: self.amplitude,
            carrier_freq: self.carrier_freq,
            carrier_phase: self.carrier_phase,
            start: self.start,
            duration: self.duration,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub pulses: Vec<PulseConfig>,
    /// End of the simulated window, ns.
    pub t_end: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
    /// LO frequency, GHz; defaults to the first pulse's carrier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_freq: Option<f64>,
    #[serde(default)]
    pub lo_phase: f64,
}

fn default_sample_step() -> f64 {
    ringdown_core::model::DEFAULT_SAMPLE_STEP
}

impl ProtocolConfig {
    pub fn to_protocol(&self) -> Result<DriveProtocol> {
        let pulses: Result<Vec<PulseSpec>> = self.pulses.iter().map(PulseConfig::to_pulse).collect();
        let pulses = pulses?;
        let lo_freq = self
            .lo_freq
            .or_else(|| pulses.first().map(|p| p.carrier_freq))
            .unwrap_or(0.0);
        Ok(DriveProtocol::new(
            pulses,
            self.t_end,
            self.sample_step,
            lo_freq,
            self.lo_phase,
        )?)
    }
}

/// Parameters for the closed-form weak-drive spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    #[serde(default = "default_omega1")]
    pub omega1: f64,
    #[serde(default = "default_omega2")]
    pub omega2: f64,
    #[serde(default = "default_perturb_amp")]
    pub drive_amp: f64,
    #[serde(default = "default_perturb_coupling")]
    pub coupling: f64,
    #[serde(default = "default_sweep_lo")]
    pub sweep_lo: f64,
    #[serde(default = "default_sweep_hi")]
    pub sweep_hi: f64,
    #[serde(default = "default_sweep_points")]
    pub sweep_points: usize,
    #[serde(default = "default_perturb_duration")]
    pub duration: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
}

fn default_omega1() -> f64 {
    3.0
}
fn default_omega2() -> f64 {
    4.0
}
fn default_perturb_amp() -> f64 {
    0.001
}
fn default_perturb_coupling() -> f64 {
    0.005
}
fn default_sweep_lo() -> f64 {
    2.5125
}
fn default_sweep_hi() -> f64 {
    4.5125
}
fn default_sweep_points() -> usize {
    81
}
fn default_perturb_duration() -> f64 {
    400.0
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            omega1: default_omega1(),
            omega2: default_omega2(),
            drive_amp: default_perturb_amp(),
            coupling: default_perturb_coupling(),
            sweep_lo: default_sweep_lo(),
            sweep_hi: default_sweep_hi(),
            sweep_points: default_sweep_points(),
            duration: default_perturb_duration(),
            sample_step: default_sample_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    #[serde(default = "default_weight_re")]
    pub weight_re: f64,
    #[serde(default)]
    pub weight_im: f64,
    pub freq: f64,
    #[serde(default)]
    pub decay: f64,
    #[serde(default)]
    pub onset: f64,
}

fn default_weight_re() -> f64 {
    1.0
}

/// Emitter-set playground: a handful of damped tones against an LO.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub emitters: Vec<EmitterConfig>,
    #[serde(default = "default_synth_lo")]
    pub lo_freq: f64,
    #[serde(default)]
    pub lo_phase: f64,
    #[serde(default = "default_synth_duration")]
    pub duration: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
}

fn default_synth_lo() -> f64 {
    4.0
}
fn default_synth_duration() -> f64 {
    2000.0
}

impl Default for SynthConfig {
    fn default() -> Self {
        // Three detuned emitters: the standard beating/sawtooth demo.
        Self {
            emitters: vec![
                EmitterConfig {
                    weight_re: 1.0,
                    weight_im: 0.0,
                    freq: 4.0,
                    decay: 0.0,
                    onset: 0.0,
                },
                EmitterConfig {
                    weight_re: 0.8,
                    weight_im: 0.0,
                    freq: 4.05,
                    decay: 0.0,
                    onset: 0.0,
                },
                EmitterConfig {
                    weight_re: 0.6,
                    weight_im: 0.0,
                    freq: 4.12,
                    decay: 0.0,
                    onset: 0.0,
                },
            ],
            lo_freq: default_synth_lo(),
            lo_phase: 0.0,
            duration: default_synth_duration(),
            sample_step: default_sample_step(),
        }
    }
}

impl RunConfig {
    /// Parse from TOML text, validating the schema and resolving defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(CliError::config)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(name) = &self.recipe {
            if !RECIPE_NAMES.contains(&name.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown recipe \"{name}\"; known: {}",
                    RECIPE_NAMES.join(", ")
                )));
            }
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if !(self.grid_scale > 0.0) {
            return Err(CliError::Config(format!(
                "grid_scale must be positive, got {}",
                self.grid_scale
            )));
        }
        if !(self.solver.rtol > 0.0) || !(self.solver.atol > 0.0) {
            return Err(CliError::Config(
                "solver.rtol and solver.atol must be positive".into(),
            ));
        }
        self.signal.to_analysis()?;
        Ok(())
    }

    /// Serialize the fully resolved configuration (all defaults explicit).
    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(CliError::config)
    }
}
