//! Named sweep recipes reproducing the simulated pulse-control protocols
//! end-to-end (model → evolve → signal): drive-frequency V maps, duration
//! and amplitude sweeps, two-pulse amplitude/phase/gap control, and the
//! detuning and interaction studies.
//!
//! Every recipe is a pure function of its configuration and seed. Sweep
//! points run in parallel on the ambient rayon pool and are collected by
//! index, so outputs are identical for any worker budget.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::evolve::{
    evolve, post_pulse_slice, EvolveError, EvolveRequest, Observable, TimeSeries,
};
use crate::floquet::{quasi_energies_monodromy, CosineDrive, FloquetError};
use crate::model::{
    DriveProtocol, EnsembleSpec, ModelError, PulseSpec, TlsParams,
};
use crate::signal::{
    average_slices, build_map, detect_peaks, phase_fft, relative_phase, zero_frequency_slice,
    Normalization, PeakSet, RealSeries, SignalError, Slice1D, SpectralMap, TimeGrid, Window,
    RELATIVE_PHASE_FLOOR,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Floquet(#[from] FloquetError),
    #[error("sweep grid is empty or not strictly monotone")]
    BadSweepGrid,
    #[error("recipe '{name}' does not sweep {expected}")]
    SweptParameterMismatch { name: String, expected: &'static str },
    #[error("phase pair ({a}, {b}) needs two distinct sites below {n_sites}")]
    BadPhasePair { a: usize, b: usize, n_sites: usize },
    #[error("unknown recipe '{name}'; known: {known}")]
    UnknownRecipe { name: String, known: String },
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Signal-chain options shared by the recipes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub window: Window,
    pub zero_pad_factor: usize,
    /// Near-DC aggregation window in MHz; `None` means one pre-padding bin.
    pub dc_tolerance_mhz: Option<f64>,
    /// Peak threshold as a fraction of the slice maximum.
    pub peak_threshold_rel: f64,
    /// Minimum peak separation in GHz.
    pub min_separation: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            window: Window::Rect,
            zero_pad_factor: 4,
            dc_tolerance_mhz: None,
            peak_threshold_rel: 0.05,
            min_separation: 0.002,
        }
    }
}

/// Integrator tolerances used by the recipes. Tighter than the library
/// defaults so positivity floors hold over microsecond windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

/// The parameter a recipe sweeps, with its grid.
#[derive(Debug, Clone, PartialEq)]
pub enum SweptParameter {
    /// Drive (and LO) frequency in GHz.
    DriveFrequency { grid: Vec<f64> },
    /// Pulse duration τ in ns; each value runs a full drive-frequency map.
    PulseDuration { grid: Vec<f64> },
    /// Pulse amplitude in GHz; each value runs a full drive-frequency map.
    PulseAmplitude { grid: Vec<f64> },
    /// First-pulse amplitude in GHz at fixed drive frequency.
    FirstPulseAmplitude { grid: Vec<f64> },
    /// Second-pulse carrier phase offset in degrees.
    FirstPulsePhase { grid_deg: Vec<f64> },
    /// Inter-pulse gap τ_g in ns.
    InterPulseGap { grid: Vec<f64> },
    /// Paired configurations: slightly detuned vs degenerate frequencies.
    Detuning {
        detuned: (f64, f64),
        degenerate: (f64, f64),
    },
    /// Uniform dipole–dipole coupling strength in GHz; each value runs a
    /// full drive-frequency map.
    Coupling { grid: Vec<f64> },
}

impl SweptParameter {
    fn check_grid(&self) -> Result<()> {
        let grid = match self {
            SweptParameter::DriveFrequency { grid }
            | SweptParameter::PulseDuration { grid }
            | SweptParameter::PulseAmplitude { grid }
            | SweptParameter::FirstPulseAmplitude { grid }
            | SweptParameter::InterPulseGap { grid }
            | SweptParameter::Coupling { grid } => grid,
            SweptParameter::FirstPulsePhase { grid_deg } => grid_deg,
            SweptParameter::Detuning { .. } => return Ok(()),
        };
        if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ExperimentError::BadSweepGrid);
        }
        Ok(())
    }
}

/// A named, self-contained sweep configuration.
#[derive(Debug, Clone)]
pub struct SweepRecipe {
    pub name: String,
    pub ensemble: EnsembleSpec,
    /// Pulse template: envelope, amplitude, duration (carrier set per point).
    pub pulse: PulseSpec,
    /// Fixed drive frequency for two-pulse protocols, GHz.
    pub drive_freq: f64,
    /// Inner drive-frequency axis for map-producing sweeps, GHz.
    pub drive_freqs: Vec<f64>,
    pub swept: SweptParameter,
    /// Ring-down recording window after the last pulse, ns.
    pub post_time: f64,
    /// Output sampling step, ns.
    pub sample_step: f64,
    /// Gap between the two pulses of two-pulse protocols, ns.
    pub gap: f64,
    /// Second-pulse amplitude for the two-pulse amplitude sweep, GHz.
    pub second_amplitude: f64,
    /// Sites whose coherence ratio forms the phase maps.
    pub phase_pair: (usize, usize),
    pub analysis: AnalysisOptions,
    pub solver: SolverOptions,
    pub seed: u64,
    /// Also compute the quasi-energy table over `drive_freqs`.
    pub with_floquet: bool,
}

impl SweepRecipe {
    fn validate(&self) -> Result<()> {
        self.swept.check_grid()?;
        let (a, b) = self.phase_pair;
        let n = self.ensemble.n_sites();
        if a == b || a >= n || b >= n {
            return Err(ExperimentError::BadPhasePair { a, b, n_sites: n });
        }
        Ok(())
    }

    fn expect_swept(&self, expected: &'static str) -> Result<()> {
        let ok = matches!(
            (&self.swept, expected),
            (SweptParameter::DriveFrequency { .. }, "drive_freq")
                | (SweptParameter::PulseDuration { .. }, "pulse_duration")
                | (SweptParameter::PulseAmplitude { .. }, "pulse_amplitude")
                | (
                    SweptParameter::FirstPulseAmplitude { .. },
                    "first_pulse_amplitude"
                )
                | (SweptParameter::FirstPulsePhase { .. }, "first_pulse_phase")
                | (SweptParameter::InterPulseGap { .. }, "inter_pulse_gap")
                | (SweptParameter::Detuning { .. }, "detuning")
                | (SweptParameter::Coupling { .. }, "coupling")
        );
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::SweptParameterMismatch {
                name: self.name.clone(),
                expected,
            })
        }
    }

    fn observables(&self) -> Vec<Observable> {
        vec![
            Observable::CollectivePopulation,
            Observable::CollectiveCoherence,
            Observable::SiteCoherence(self.phase_pair.0),
            Observable::SiteCoherence(self.phase_pair.1),
        ]
    }

    /// Near-DC window: explicit option, or one pre-padding FFT bin.
    fn dc_tolerance(&self, signal_duration: f64) -> f64 {
        self.analysis
            .dc_tolerance_mhz
            .unwrap_or(1e3 / signal_duration)
    }
}

/// One evolved drive point: population trace, the wrapped relative phase of
/// the chosen coherence pair over the full window, and the homodyne phase of
/// the demodulated post-pulse collective coherence (the transient the
/// hardware chain records).
struct DrivePoint {
    population: RealSeries,
    phase: RealSeries,
    homodyne_phase: RealSeries,
}

fn evolve_drive_point(recipe: &SweepRecipe, protocol: DriveProtocol) -> Result<DrivePoint> {
    let req = EvolveRequest::new(
        recipe.ensemble.clone(),
        protocol.clone(),
        recipe.observables(),
    )
    .with_tolerances(recipe.solver.rtol, recipe.solver.atol);
    let series = evolve(&req)?;
    let pop = &series["collective_population"];
    let c1 = &series[&format!("site_coherence_{}", recipe.phase_pair.0)];
    let c2 = &series[&format!("site_coherence_{}", recipe.phase_pair.1)];
    let (phase, _masked) = relative_phase(c1, c2, RELATIVE_PHASE_FLOOR)?;
    let post = post_pulse_slice(&series["collective_coherence"], &protocol)?;
    let lo = protocol.lo_freq;
    let trace = crate::signal::demodulate(&post, lo, protocol.lo_phase, None)?;
    let (_, homodyne_phase) = crate::signal::amp_phase(&trace);
    Ok(DrivePoint {
        population: RealSeries {
            t0: pop.t0,
            dt: pop.dt,
            values: pop.re(),
            label: "collective_population".into(),
        },
        phase,
        homodyne_phase,
    })
}

fn single_pulse_protocol(recipe: &SweepRecipe, carrier: f64, duration: f64, amplitude: f64) -> Result<DriveProtocol> {
    let pulse = PulseSpec {
        carrier_freq: carrier,
        duration,
        amplitude,
        start: 0.0,
        ..recipe.pulse
    };
    Ok(DriveProtocol::new(
        vec![pulse],
        duration + recipe.post_time,
        recipe.sample_step,
        carrier,
        0.0,
    )?)
}

/// Drive-frequency map: population time grid, relative-phase V map, the
/// homodyne-transient V map, and optionally the quasi-energy table.
#[derive(Debug, Clone)]
pub struct DriveFrequencyMap {
    pub population: TimeGrid,
    /// FFT of `arg(⟨σ⁺_a⟩/⟨σ⁺_b⟩)` over the full window, per drive point.
    pub phase_map: SpectralMap,
    /// FFT of the demodulated post-pulse collective-coherence phase — the
    /// chain the hardware analysis applies to the recorded transient. Its
    /// near-DC slice localizes the V bases.
    pub homodyne_map: SpectralMap,
    /// `(drive freq, folded quasi-energy branches)` per sweep point.
    pub quasi_energies: Option<Vec<(f64, Vec<f64>)>>,
}

/// Evolve every drive frequency of the recipe's inner axis and assemble the
/// time-domain grid and the phase-FFT V map.
pub fn run_drive_frequency_map(recipe: &SweepRecipe) -> Result<DriveFrequencyMap> {
    recipe.validate()?;
    recipe.expect_swept("drive_freq")?;
    let grid = match &recipe.swept {
        SweptParameter::DriveFrequency { grid } => grid.clone(),
        _ => unreachable!(),
    };
    drive_frequency_map_impl(recipe, &grid, recipe.pulse.duration, recipe.pulse.amplitude)
}

fn drive_frequency_map_impl(
    recipe: &SweepRecipe,
    drive_freqs: &[f64],
    duration: f64,
    amplitude: f64,
) -> Result<DriveFrequencyMap> {
    let points: Vec<Result<(DrivePoint, Option<Vec<f64>>)>> = drive_freqs
        .par_iter()
        .map(|&freq| {
            let protocol = single_pulse_protocol(recipe, freq, duration, amplitude)?;
            let point = evolve_drive_point(recipe, protocol)?;
            let branches = if recipe.with_floquet {
                let drive = CosineDrive::new(freq, amplitude);
                Some(quasi_energies_monodromy(&recipe.ensemble, &drive, 1e-10)?.branches)
            } else {
                None
            };
            Ok((point, branches))
        })
        .collect();

    let mut population_rows = Vec::with_capacity(drive_freqs.len());
    let mut phase_columns = Vec::with_capacity(drive_freqs.len());
    let mut homodyne_columns = Vec::with_capacity(drive_freqs.len());
    let mut quasi = Vec::new();
    let mut times = Vec::new();
    for (freq, point) in drive_freqs.iter().zip(points) {
        let (point, branches) = point?;
        if times.is_empty() {
            times = (0..point.population.len())
                .map(|k| point.population.time(k))
                .collect();
        }
        population_rows.push(point.population.values);
        let spectrum = phase_fft(
            &point.phase,
            recipe.analysis.window,
            recipe.analysis.zero_pad_factor,
        )?;
        phase_columns.push((*freq, spectrum));
        let homodyne = phase_fft(
            &point.homodyne_phase,
            recipe.analysis.window,
            recipe.analysis.zero_pad_factor,
        )?;
        homodyne_columns.push((*freq, homodyne));
        if let Some(branches) = branches {
            quasi.push((*freq, branches));
        }
    }

    let mut population = Array2::zeros((drive_freqs.len(), times.len()));
    for (i, row) in population_rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            population[(i, k)] = *v;
        }
    }
    Ok(DriveFrequencyMap {
        population: TimeGrid {
            sweep_label: "drive_freq_ghz".into(),
            sweep_values: drive_freqs.to_vec(),
            times,
            values: population,
        },
        phase_map: build_map("drive_freq_ghz", &phase_columns, Normalization::PerColumnMax)?,
        homodyne_map: build_map(
            "drive_freq_ghz",
            &homodyne_columns,
            Normalization::PerColumnMax,
        )?,
        quasi_energies: (!quasi.is_empty()).then_some(quasi),
    })
}

/// Duration sweep: a full drive-frequency map per pulse duration, the
/// near-DC slices stacked over duration, their average, and its peaks.
#[derive(Debug, Clone)]
pub struct DurationSweep {
    pub per_duration: Vec<(f64, DriveFrequencyMap)>,
    pub dc_slices: Vec<(f64, Slice1D)>,
    pub averaged: Slice1D,
    pub peaks: PeakSet,
}

pub fn run_duration_sweep(recipe: &SweepRecipe) -> Result<DurationSweep> {
    recipe.validate()?;
    recipe.expect_swept("pulse_duration")?;
    let durations = match &recipe.swept {
        SweptParameter::PulseDuration { grid } => grid.clone(),
        _ => unreachable!(),
    };
    let mut per_duration = Vec::with_capacity(durations.len());
    let mut dc_slices = Vec::with_capacity(durations.len());
    for &tau in &durations {
        let map =
            drive_frequency_map_impl(recipe, &recipe.drive_freqs, tau, recipe.pulse.amplitude)?;
        // The homodyne transient spans the post-pulse window for every τ.
        let tolerance = recipe.dc_tolerance(recipe.post_time);
        let slice = zero_frequency_slice(&map.homodyne_map, tolerance)?;
        per_duration.push((tau, map));
        dc_slices.push((tau, slice));
    }
    let averaged = average_slices(
        &dc_slices
            .iter()
            .map(|(_, s)| s.clone())
            .collect::<Vec<_>>(),
    )?;
    let max = averaged.values.iter().cloned().fold(0.0, f64::max);
    let peaks = detect_peaks(
        &averaged,
        recipe.analysis.peak_threshold_rel * max,
        recipe.analysis.min_separation,
    )?;
    Ok(DurationSweep {
        per_duration,
        dc_slices,
        averaged,
        peaks,
    })
}

/// Amplitude sweep: per-amplitude zero-time and near-DC slices over the
/// drive-frequency axis, plus a saturation cut at one frequency.
#[derive(Debug, Clone)]
pub struct AmplitudeSweep {
    pub zero_time_stack: Vec<(f64, Slice1D)>,
    pub dc_stack: Vec<(f64, Slice1D)>,
    /// Post-pulse population vs amplitude at `cut_freq`.
    pub saturation_cut: Slice1D,
    pub cut_freq: f64,
}

pub fn run_amplitude_sweep(recipe: &SweepRecipe, cut_freq: f64) -> Result<AmplitudeSweep> {
    recipe.validate()?;
    recipe.expect_swept("pulse_amplitude")?;
    let amplitudes = match &recipe.swept {
        SweptParameter::PulseAmplitude { grid } => grid.clone(),
        _ => unreachable!(),
    };
    let mut zero_time_stack = Vec::with_capacity(amplitudes.len());
    let mut dc_stack = Vec::with_capacity(amplitudes.len());
    for &amp in &amplitudes {
        let map =
            drive_frequency_map_impl(recipe, &recipe.drive_freqs, recipe.pulse.duration, amp)?;
        // Zero-time slice: population at the first sample after pulse end.
        let t_off = recipe.pulse.duration;
        let column = map
            .population
            .times
            .iter()
            .position(|&t| t >= t_off - 1e-9)
            .unwrap_or(0);
        let zero_time = Slice1D {
            label: "zero_time_population".into(),
            axis_label: "drive_freq_ghz".into(),
            axis: map.population.sweep_values.clone(),
            values: (0..map.population.sweep_values.len())
                .map(|i| map.population.values[(i, column)])
                .collect(),
        };
        let tolerance = recipe.dc_tolerance(recipe.post_time);
        let dc = zero_frequency_slice(&map.homodyne_map, tolerance)?;
        zero_time_stack.push((amp, zero_time));
        dc_stack.push((amp, dc));
    }
    let cut_index = recipe
        .drive_freqs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - cut_freq).abs().total_cmp(&(b.1 - cut_freq).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let saturation_cut = Slice1D {
        label: "saturation_cut".into(),
        axis_label: "amplitude_ghz".into(),
        axis: amplitudes.clone(),
        values: zero_time_stack
            .iter()
            .map(|(_, s)| s.values[cut_index])
            .collect(),
    };
    Ok(AmplitudeSweep {
        zero_time_stack,
        dc_stack,
        saturation_cut,
        cut_freq: recipe.drive_freqs[cut_index],
    })
}

/// Two-pulse amplitude control: post-second-pulse population vs first-pulse
/// amplitude, with the single-second-pulse reference row.
#[derive(Debug, Clone)]
pub struct AmplitudeControl {
    /// Rows: first-pulse amplitude; columns: time from second-pulse end.
    pub grid: TimeGrid,
    /// Post-pulse response of the second pulse alone.
    pub reference: RealSeries,
}

pub fn run_two_pulse_amplitude_control(recipe: &SweepRecipe) -> Result<AmplitudeControl> {
    recipe.validate()?;
    recipe.expect_swept("first_pulse_amplitude")?;
    let a1_grid = match &recipe.swept {
        SweptParameter::FirstPulseAmplitude { grid } => grid.clone(),
        _ => unreachable!(),
    };
    let tau = recipe.pulse.duration;
    let second_start = tau + recipe.gap;
    let t_end = second_start + tau + recipe.post_time;
    let carrier = recipe.drive_freq;

    let rows: Vec<Result<RealSeries>> = a1_grid
        .par_iter()
        .map(|&a1| {
            let first = PulseSpec {
                amplitude: a1,
                carrier_freq: carrier,
                start: 0.0,
                ..recipe.pulse
            };
            let second = PulseSpec {
                amplitude: recipe.second_amplitude,
                carrier_freq: carrier,
                start: second_start,
                ..recipe.pulse
            };
            let protocol = DriveProtocol::new(
                vec![first, second],
                t_end,
                recipe.sample_step,
                carrier,
                0.0,
            )?;
            post_second_pulse_population(recipe, protocol)
        })
        .collect();

    // Reference: the second pulse alone, same timing.
    let reference = {
        let second = PulseSpec {
            amplitude: recipe.second_amplitude,
            carrier_freq: carrier,
            start: second_start,
            ..recipe.pulse
        };
        let protocol =
            DriveProtocol::new(vec![second], t_end, recipe.sample_step, carrier, 0.0)?;
        post_second_pulse_population(recipe, protocol)?
    };

    let mut times = Vec::new();
    let mut values = Vec::new();
    for row in rows {
        let row = row?;
        if times.is_empty() {
            times = (0..row.len()).map(|k| row.time(k)).collect();
        }
        values.push(row.values);
    }
    let mut grid_values = Array2::zeros((a1_grid.len(), times.len()));
    for (i, row) in values.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            grid_values[(i, k)] = *v;
        }
    }
    Ok(AmplitudeControl {
        grid: TimeGrid {
            sweep_label: "first_pulse_amplitude_ghz".into(),
            sweep_values: a1_grid,
            times,
            values: grid_values,
        },
        reference,
    })
}

fn post_second_pulse_population(
    recipe: &SweepRecipe,
    protocol: DriveProtocol,
) -> Result<RealSeries> {
    let req = EvolveRequest::new(
        recipe.ensemble.clone(),
        protocol.clone(),
        vec![Observable::CollectivePopulation],
    )
    .with_tolerances(recipe.solver.rtol, recipe.solver.atol);
    let series = evolve(&req)?;
    let sliced = post_pulse_slice(&series["collective_population"], &protocol)?;
    Ok(RealSeries {
        t0: sliced.t0,
        dt: sliced.dt,
        values: sliced.re(),
        label: "post_pulse_population".into(),
    })
}

/// Two-pulse relative-phase control: population grid over (Δφ × time).
#[derive(Debug, Clone)]
pub struct PhaseControl {
    /// Rows: phase offset in degrees; columns: absolute time.
    pub grid: TimeGrid,
}

pub fn run_two_pulse_phase_control(recipe: &SweepRecipe) -> Result<PhaseControl> {
    recipe.validate()?;
    recipe.expect_swept("first_pulse_phase")?;
    let dphi_deg = match &recipe.swept {
        SweptParameter::FirstPulsePhase { grid_deg } => grid_deg.clone(),
        _ => unreachable!(),
    };
    let grid = phase_control_grid(recipe, &dphi_deg, recipe.gap)?;
    Ok(PhaseControl { grid })
}

fn phase_control_grid(
    recipe: &SweepRecipe,
    dphi_deg: &[f64],
    gap: f64,
) -> Result<TimeGrid> {
    let tau = recipe.pulse.duration;
    let second_start = tau + gap;
    let t_end = second_start + tau + recipe.post_time;
    let carrier = recipe.drive_freq;
    let rows: Vec<Result<Vec<f64>>> = dphi_deg
        .par_iter()
        .map(|&deg| {
            // Reduce in degrees so 360° maps to an exactly identical pulse.
            let phase = deg.rem_euclid(360.0).to_radians();
            let first = PulseSpec {
                carrier_freq: carrier,
                start: 0.0,
                ..recipe.pulse
            };
            let second = PulseSpec {
                carrier_freq: carrier,
                start: second_start,
                ..recipe.pulse
            }
            .with_phase(phase);
            let protocol = DriveProtocol::new(
                vec![first, second],
                t_end,
                recipe.sample_step,
                carrier,
                0.0,
            )?;
            let req = EvolveRequest::new(
                recipe.ensemble.clone(),
                protocol,
                vec![Observable::CollectivePopulation],
            )
            .with_tolerances(recipe.solver.rtol, recipe.solver.atol);
            let series = evolve(&req)?;
            Ok(series["collective_population"].re())
        })
        .collect();
    let mut values = Vec::new();
    for row in rows {
        values.push(row?);
    }
    let n_t = values[0].len();
    let times: Vec<f64> = (0..n_t).map(|k| k as f64 * recipe.sample_step).collect();
    let mut grid_values = Array2::zeros((dphi_deg.len(), n_t));
    for (i, row) in values.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            grid_values[(i, k)] = *v;
        }
    }
    Ok(TimeGrid {
        sweep_label: "phase_offset_deg".into(),
        sweep_values: dphi_deg.to_vec(),
        times,
        values: grid_values,
    })
}

/// Gap sweep: population re-indexed to the second pulse's start, per gap.
#[derive(Debug, Clone)]
pub struct GapSweep {
    /// Rows: inter-pulse gap; columns: time from second-pulse start.
    pub grid: TimeGrid,
    /// The isolated single-pulse response on the same re-indexed axis.
    pub isolated: RealSeries,
}

pub fn run_gap_sweep(recipe: &SweepRecipe) -> Result<GapSweep> {
    recipe.validate()?;
    recipe.expect_swept("inter_pulse_gap")?;
    let gaps = match &recipe.swept {
        SweptParameter::InterPulseGap { grid } => grid.clone(),
        _ => unreachable!(),
    };
    let tau = recipe.pulse.duration;
    let carrier = recipe.drive_freq;
    let window = tau + recipe.post_time;
    let rows: Vec<Result<Vec<f64>>> = gaps
        .par_iter()
        .map(|&gap| {
            let second_start = tau + gap;
            let first = PulseSpec {
                carrier_freq: carrier,
                start: 0.0,
                ..recipe.pulse
            };
            let second = PulseSpec {
                carrier_freq: carrier,
                start: second_start,
                ..recipe.pulse
            };
            let protocol = DriveProtocol::new(
                vec![first, second],
                second_start + window,
                recipe.sample_step,
                carrier,
                0.0,
            )?;
            let req = EvolveRequest::new(
                recipe.ensemble.clone(),
                protocol,
                vec![Observable::CollectivePopulation],
            )
            .with_tolerances(recipe.solver.rtol, recipe.solver.atol);
            let series = evolve(&req)?;
            let pop = &series["collective_population"];
            // Re-index to the second pulse's start.
            let first_idx = (0..pop.len())
                .find(|&k| pop.time(k) >= second_start - 1e-9)
                .unwrap_or(0);
            Ok(pop.re()[first_idx..].to_vec())
        })
        .collect();

    let isolated = {
        let pulse = PulseSpec {
            carrier_freq: carrier,
            start: 0.0,
            ..recipe.pulse
        };
        let protocol =
            DriveProtocol::new(vec![pulse], window, recipe.sample_step, carrier, 0.0)?;
        let req = EvolveRequest::new(
            recipe.ensemble.clone(),
            protocol,
            vec![Observable::CollectivePopulation],
        )
        .with_tolerances(recipe.solver.rtol, recipe.solver.atol);
        let series = evolve(&req)?;
        RealSeries {
            t0: 0.0,
            dt: recipe.sample_step,
            values: series["collective_population"].re(),
            label: "isolated_pulse".into(),
        }
    };

    let mut values = Vec::new();
    let mut n_t = usize::MAX;
    for row in rows {
        let row = row?;
        n_t = n_t.min(row.len());
        values.push(row);
    }
    let times: Vec<f64> = (0..n_t).map(|k| k as f64 * recipe.sample_step).collect();
    let mut grid_values = Array2::zeros((gaps.len(), n_t));
    for (i, row) in values.iter().enumerate() {
        for k in 0..n_t {
            grid_values[(i, k)] = row[k];
        }
    }
    Ok(GapSweep {
        grid: TimeGrid {
            sweep_label: "gap_ns".into(),
            sweep_values: gaps,
            times,
            values: grid_values,
        },
        isolated,
    })
}

/// One arm of the detuning study.
#[derive(Debug, Clone)]
pub struct DetuningCase {
    pub population: RealSeries,
    /// Mean-removed FFT of the post-pulse population (no zero padding), as
    /// `(bins MHz, magnitudes)`.
    pub post_pulse_spectrum: (Vec<f64>, Vec<f64>),
    pub phase_map: SpectralMap,
}

/// Paired outputs of the detuning study: slightly detuned vs degenerate.
#[derive(Debug, Clone)]
pub struct DetuningStudy {
    pub detuned: DetuningCase,
    pub degenerate: DetuningCase,
}

pub fn run_detuning_study(recipe: &SweepRecipe) -> Result<DetuningStudy> {
    recipe.validate()?;
    recipe.expect_swept("detuning")?;
    let (pair_detuned, pair_degenerate) = match recipe.swept {
        SweptParameter::Detuning {
            detuned,
            degenerate,
        } => (detuned, degenerate),
        _ => unreachable!(),
    };
    let j = recipe.ensemble.coupling()[(0, 1)];
    let gamma = recipe.ensemble.gamma();
    let case = |freqs: (f64, f64)| -> Result<DetuningCase> {
        let ens = EnsembleSpec::pair(freqs.0, freqs.1, j, gamma)?;
        let sub = SweepRecipe {
            ensemble: ens,
            ..recipe.clone()
        };
        let map = drive_frequency_map_impl(
            &sub,
            &sub.drive_freqs,
            sub.pulse.duration,
            sub.pulse.amplitude,
        )?;
        // Single trace at the fixed drive frequency for the beat analysis.
        let protocol = single_pulse_protocol(
            &sub,
            sub.drive_freq,
            sub.pulse.duration,
            sub.pulse.amplitude,
        )?;
        let point = evolve_drive_point(&sub, protocol.clone())?;
        let post = {
            let as_series = TimeSeries {
                t0: point.population.t0,
                dt: point.population.dt,
                values: point
                    .population
                    .values
                    .iter()
                    .map(|&v| num_complex::Complex64::new(v, 0.0))
                    .collect(),
                label: "population".into(),
            };
            let sliced = post_pulse_slice(&as_series, &protocol)?;
            RealSeries {
                t0: sliced.t0,
                dt: sliced.dt,
                values: sliced.re(),
                label: "post_pulse_population".into(),
            }
        };
        let post_pulse_spectrum = phase_fft(&post, Window::Rect, 1)?;
        Ok(DetuningCase {
            population: point.population,
            post_pulse_spectrum,
            phase_map: map.phase_map,
        })
    };
    Ok(DetuningStudy {
        detuned: case(pair_detuned)?,
        degenerate: case(pair_degenerate)?,
    })
}

/// Interaction study: population-FFT and phase-FFT maps per coupling value.
#[derive(Debug, Clone)]
pub struct InteractionEntry {
    pub coupling: f64,
    pub population_map: SpectralMap,
    pub phase_map: SpectralMap,
}

pub fn run_interaction_study(recipe: &SweepRecipe) -> Result<Vec<InteractionEntry>> {
    recipe.validate()?;
    recipe.expect_swept("coupling")?;
    let couplings = match &recipe.swept {
        SweptParameter::Coupling { grid } => grid.clone(),
        _ => unreachable!(),
    };
    let n = recipe.ensemble.n_sites();
    let freqs: Vec<f64> = recipe
        .ensemble
        .tls()
        .iter()
        .map(TlsParams::energy)
        .collect();
    couplings
        .iter()
        .map(|&j| {
            let mut coupling = Array2::zeros((n, n));
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        coupling[(a, b)] = j;
                    }
                }
            }
            let tls = freqs.iter().map(|&f| TlsParams::bare(f)).collect();
            let ens = EnsembleSpec::new(tls, coupling, recipe.ensemble.gamma())?;
            let sub = SweepRecipe {
                ensemble: ens,
                ..recipe.clone()
            };
            let map = drive_frequency_map_impl(
                &sub,
                &sub.drive_freqs,
                sub.pulse.duration,
                sub.pulse.amplitude,
            )?;
            // Population FFT per drive frequency.
            let columns: Vec<(f64, (Vec<f64>, Vec<f64>))> = map
                .population
                .sweep_values
                .iter()
                .enumerate()
                .map(|(i, &freq)| {
                    let series = RealSeries {
                        t0: 0.0,
                        dt: sub.sample_step,
                        values: (0..map.population.times.len())
                            .map(|k| map.population.values[(i, k)])
                            .collect(),
                        label: "population".into(),
                    };
                    Ok((
                        freq,
                        phase_fft(
                            &series,
                            sub.analysis.window,
                            sub.analysis.zero_pad_factor,
                        )?,
                    ))
                })
                .collect::<Result<_>>()?;
            Ok(InteractionEntry {
                coupling: j,
                population_map: build_map(
                    "drive_freq_ghz",
                    &columns,
                    Normalization::PerColumnMax,
                )?,
                phase_map: map.phase_map,
            })
        })
        .collect()
}

/// Linearly spaced grid including both endpoints.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two grid points");
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Scale a default point count for coarse CI runs (at least 3 points).
fn scaled(n_full: usize, grid_scale: f64) -> usize {
    ((n_full as f64 * grid_scale).round() as usize).max(3)
}

/// Names of the built-in recipes.
pub const RECIPE_NAMES: [&str; 9] = [
    "two-tone-map",
    "quartet-map",
    "duration-sweep",
    "amplitude-sweep",
    "two-pulse-amplitude",
    "two-pulse-phase",
    "gap-sweep",
    "detuning-pair",
    "coupling-study",
];

/// Construct a built-in recipe by name. `grid_scale` shrinks the default
/// sweep resolutions (1.0 = full published-figure resolution).
pub fn recipe_by_name(name: &str, seed: u64, grid_scale: f64) -> Result<SweepRecipe> {
    let base = |ensemble: EnsembleSpec, pulse: PulseSpec| SweepRecipe {
        name: name.to_string(),
        ensemble,
        pulse,
        drive_freq: 0.0,
        drive_freqs: Vec::new(),
        swept: SweptParameter::DriveFrequency { grid: Vec::new() },
        post_time: 400.0,
        sample_step: 0.25,
        gap: 0.0,
        second_amplitude: 0.1,
        phase_pair: (0, 1),
        analysis: AnalysisOptions::default(),
        solver: SolverOptions::default(),
        seed,
        with_floquet: false,
    };
    match name {
        // Two coupled TLS at 3.0/4.0 GHz under a square–cosine pulse, with
        // the drive frequency swept and the quasi-energy table attached.
        "two-tone-map" => {
            let ens = EnsembleSpec::pair(3.0, 4.0, 0.05, 0.002)?;
            let pulse = PulseSpec::square_cosine(0.1, 3.0, 0.0, 100.0);
            let grid = linspace(3.0, 5.0, scaled(201, grid_scale));
            Ok(SweepRecipe {
                drive_freqs: grid.clone(),
                swept: SweptParameter::DriveFrequency { grid },
                with_floquet: true,
                ..base(ens, pulse)
            })
        }
        // Four TLS with sampled couplings under a single square pulse.
        "quartet-map" => {
            let freqs = [3.49, 3.17, 4.09, 4.19];
            let sampled = crate::model::sample_random_ensemble(
                4,
                (3.0, 5.0),
                (-0.05, 0.05),
                0.002,
                seed,
            )?;
            let tls = freqs.iter().map(|&f| TlsParams::bare(f)).collect();
            let ens = EnsembleSpec::new(tls, sampled.coupling().clone(), 0.002)?;
            let pulse = PulseSpec::square(0.1, 4.0, 0.0, 200.0);
            let grid = linspace(3.0, 5.0, scaled(201, grid_scale));
            Ok(SweepRecipe {
                drive_freqs: grid.clone(),
                swept: SweptParameter::DriveFrequency { grid },
                ..base(ens, pulse)
            })
        }
        // Close pair at 4.0/4.1 GHz, durations 20/112/300 ns.
        "duration-sweep" => {
            let ens = EnsembleSpec::pair(4.0, 4.1, 0.05, 0.002)?;
            let pulse = PulseSpec::square(0.1, 4.0, 0.0, 100.0);
            Ok(SweepRecipe {
                drive_freqs: linspace(3.8, 4.3, scaled(21, (grid_scale * 2.0).min(1.0))),
                swept: SweptParameter::PulseDuration {
                    grid: vec![20.0, 112.0, 300.0],
                },
                ..base(ens, pulse)
            })
        }
        // Same pair, 200 ns pulse, amplitude swept at fixed duration.
        "amplitude-sweep" => {
            let ens = EnsembleSpec::pair(4.0, 4.1, 0.05, 0.002)?;
            let pulse = PulseSpec::square(0.1, 4.0, 0.0, 200.0);
            Ok(SweepRecipe {
                drive_freqs: linspace(3.8, 4.3, scaled(21, (grid_scale * 2.0).min(1.0))),
                swept: SweptParameter::PulseAmplitude {
                    grid: linspace(0.0, 0.3, scaled(11, (grid_scale * 2.0).min(1.0))),
                },
                ..base(ens, pulse)
            })
        }
        // Quartet ensemble driven at 4.15 GHz: first-pulse amplitude sweep
        // against a fixed 100 MHz second pulse after a 100 ns gap.
        "two-pulse-amplitude" => {
            let quartet = recipe_by_name("quartet-map", seed, grid_scale)?;
            let pulse = PulseSpec::square(0.1, 4.15, 0.0, 200.0);
            Ok(SweepRecipe {
                drive_freq: 4.15,
                gap: 100.0,
                second_amplitude: 0.1,
                swept: SweptParameter::FirstPulseAmplitude {
                    grid: linspace(0.0, 0.3, scaled(31, grid_scale)),
                },
                ..base(quartet.ensemble, pulse)
            })
        }
        // Two-TLS pair, fixed 150 ns gap, relative phase swept over 360°.
        "two-pulse-phase" => {
            let ens = EnsembleSpec::pair(3.9, 4.0, 0.05, 0.002)?;
            let pulse = PulseSpec::square(0.12, 3.93, 0.0, 200.0);
            Ok(SweepRecipe {
                drive_freq: 3.93,
                gap: 150.0,
                swept: SweptParameter::FirstPulsePhase {
                    grid_deg: linspace(0.0, 360.0, scaled(25, grid_scale)),
                },
                ..base(ens, pulse)
            })
        }
        // Same pair and drive, inter-pulse gap swept.
        "gap-sweep" => {
            let ens = EnsembleSpec::pair(3.9, 4.0, 0.05, 0.002)?;
            let pulse = PulseSpec::square(0.12, 3.93, 0.0, 200.0);
            Ok(SweepRecipe {
                drive_freq: 3.93,
                swept: SweptParameter::InterPulseGap {
                    grid: linspace(10.0, 600.0, scaled(13, grid_scale)),
                },
                ..base(ens, pulse)
            })
        }
        // Slightly detuned vs degenerate pair at 10 MHz coupling.
        "detuning-pair" => {
            let ens = EnsembleSpec::pair(4.0, 4.12, 0.01, 0.002)?;
            let pulse = PulseSpec::square(0.1, 4.06, 0.0, 100.0);
            Ok(SweepRecipe {
                drive_freq: 4.06,
                drive_freqs: linspace(3.85, 4.3, scaled(21, (grid_scale * 2.0).min(1.0))),
                post_time: 500.0,
                swept: SweptParameter::Detuning {
                    detuned: (4.0, 4.12),
                    degenerate: (4.0, 4.0),
                },
                ..base(ens, pulse)
            })
        }
        // Four TLS, uniform coupling stepped over three decades.
        "coupling-study" => {
            let ens = crate::model::sample_random_ensemble(4, (3.0, 5.0), (0.0, 0.0), 0.001, seed)?;
            let pulse = PulseSpec::square(0.1, 4.0, 0.0, 400.0);
            Ok(SweepRecipe {
                drive_freqs: linspace(3.0, 5.0, scaled(41, (grid_scale * 2.0).min(1.0))),
                post_time: 500.0,
                swept: SweptParameter::Coupling {
                    grid: vec![0.005, 0.05, 0.5],
                },
                ..base(ens, pulse)
            })
        }
        _ => Err(ExperimentError::UnknownRecipe {
            name: name.to_string(),
            known: RECIPE_NAMES.join(", "),
        }),
    }
}
