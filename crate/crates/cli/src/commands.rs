//! Subcommand implementations shared by the binary and the test suites.

use std::path::Path;

use ringdown_core::experiments::linspace;
use ringdown_core::floquet::{
    extended_convergence, quasi_energies_extended, quasi_energies_monodromy, CosineDrive,
};
use ringdown_core::model::EnsembleSpec;
use ringdown_core::perturb::{analytic_phase_spectrum, PerturbParams};
use ringdown_core::signal::{
    amp_phase, detect_peaks, phase_fft, spectral_density, synth_emitters, zero_frequency_slice,
    Emitter, EmitterSet, SampleGrid, Slice1D,
};

use crate::artifacts::{
    emit_grid, emit_peaks, emit_real_series, emit_slice, emit_trace, read_slice, read_trace,
    GridArtifact,
};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{unix_now, RunManifest};
use crate::runner::{spectral_map_grid, ArtifactSink};

fn finalize(
    out_dir: &Path,
    config: &RunConfig,
    started: u64,
    sink: &ArtifactSink,
) -> Result<RunManifest> {
    let resolved = config.resolved_toml()?;
    let manifest = RunManifest::build(out_dir, &resolved, config.seed, started, sink.written())?;
    manifest.verify(out_dir)?;
    manifest.write(out_dir)?;
    Ok(manifest)
}

fn echo_config(config: &RunConfig, sink: &mut ArtifactSink) -> Result<()> {
    let resolved = config.resolved_toml()?;
    std::fs::write(sink.path("config.toml"), resolved)
        .map_err(|e| CliError::Io(format!("writing config echo: {e}")))
}

fn branch_table(rows: &[(f64, Vec<f64>)], label: &str) -> Result<GridArtifact> {
    let n_branches = rows.first().map(|(_, b)| b.len()).unwrap_or(0);
    GridArtifact::new(
        label,
        "drive_freq_ghz",
        rows.iter().map(|(f, _)| *f).collect(),
        "branch",
        (0..n_branches).map(|k| k as f64).collect(),
        rows.iter().flat_map(|(_, b)| b.iter().copied()).collect(),
    )
}

/// Quasi-energy tables over a drive-frequency grid, by both methods, plus a
/// branch-vs-cutoff convergence report at the sweep midpoint.
pub fn run_floquet(
    config: &RunConfig,
    out_dir: &Path,
    freq_range: (f64, f64),
    points: usize,
    amplitude: f64,
    cutoff: usize,
) -> Result<RunManifest> {
    let (freq_lo, freq_hi) = freq_range;
    if points < 2 || freq_hi <= freq_lo {
        return Err(CliError::Config(
            "floquet sweep needs freq_hi > freq_lo and at least 2 points".into(),
        ));
    }
    let ensemble = match &config.model {
        Some(model) => model.to_ensemble()?,
        None => EnsembleSpec::pair(3.0, 4.0, 0.05, 0.0).map_err(CliError::config)?,
    };
    let started = unix_now();
    let mut sink = ArtifactSink::new(out_dir)?;
    echo_config(config, &mut sink)?;

    let freqs = linspace(freq_lo, freq_hi, points);
    let mut monodromy = Vec::with_capacity(points);
    let mut extended = Vec::with_capacity(points);
    for &freq in &freqs {
        let drive = CosineDrive::new(freq, amplitude);
        monodromy.push((
            freq,
            quasi_energies_monodromy(&ensemble, &drive, 1e-10)?.branches,
        ));
        extended.push((
            freq,
            quasi_energies_extended(&ensemble, &drive, cutoff)?
                .spectrum
                .branches,
        ));
    }
    emit_grid(
        &branch_table(&monodromy, "quasi_energies_monodromy_ghz")?,
        &sink.path("quasi_energies_monodromy.tsv"),
    )?;
    emit_grid(
        &branch_table(&extended, "quasi_energies_extended_ghz")?,
        &sink.path("quasi_energies_extended.tsv"),
    )?;

    let mid = freqs[freqs.len() / 2];
    let drive = CosineDrive::new(mid, amplitude);
    let cutoffs = [5, 10, cutoff.max(15), cutoff.max(15) + 5];
    let report = extended_convergence(&ensemble, &drive, &cutoffs)?;
    let conv_rows: Vec<(f64, Vec<f64>)> = report
        .into_iter()
        .map(|(m, branches)| (m as f64, branches))
        .collect();
    emit_grid(
        &branch_table(&conv_rows, "branches_vs_cutoff_ghz")?,
        &sink.path("convergence.tsv"),
    )?;

    finalize(out_dir, config, started, &sink)
}

/// Closed-form weak-drive relative-phase spectrum and its near-DC slice.
pub fn run_perturb(config: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    let pconf = config.perturb.clone().unwrap_or_default();
    let params = PerturbParams {
        omega1: pconf.omega1,
        omega2: pconf.omega2,
        omega_d: pconf.sweep_lo,
        drive_amp: pconf.drive_amp,
        coupling: pconf.coupling,
    };
    if pconf.sweep_points < 2 || pconf.sweep_hi <= pconf.sweep_lo {
        return Err(CliError::Config(
            "perturb sweep needs sweep_hi > sweep_lo and at least 2 points".into(),
        ));
    }
    let started = unix_now();
    let mut sink = ArtifactSink::new(out_dir)?;
    echo_config(config, &mut sink)?;

    let sweep = linspace(pconf.sweep_lo, pconf.sweep_hi, pconf.sweep_points);
    let grid = SampleGrid::from_duration(pconf.duration, pconf.sample_step);
    let analysis = config.signal.to_analysis()?;
    let map = analytic_phase_spectrum(
        &params,
        &sweep,
        grid,
        analysis.window,
        analysis.zero_pad_factor,
    )?;
    emit_grid(
        &spectral_map_grid(&map, "analytic_phase_fft")?,
        &sink.path("analytic_vmap.tsv"),
    )?;
    let tolerance = analysis.dc_tolerance_mhz.unwrap_or(1e3 / pconf.duration);
    let slice = zero_frequency_slice(&map, tolerance)?;
    emit_slice(&slice, &sink.path("dc_slice.tsv"))?;

    finalize(out_dir, config, started, &sink)
}

/// Synthesize the configured emitter set: I/Q trace, amplitude, wrapped
/// phase, and the phase FFT.
pub fn run_synth(config: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    let sconf = config.synth.clone().unwrap_or_default();
    let emitters: Vec<Emitter> = sconf
        .emitters
        .iter()
        .map(|e| Emitter {
            weight: num_complex::Complex64::new(e.weight_re, e.weight_im),
            freq: e.freq,
            decay: e.decay,
            onset: e.onset,
        })
        .collect();
    let set = EmitterSet::new(emitters).map_err(CliError::numerical)?;
    let grid = SampleGrid::from_duration(sconf.duration, sconf.sample_step);

    let started = unix_now();
    let mut sink = ArtifactSink::new(out_dir)?;
    echo_config(config, &mut sink)?;

    let trace = synth_emitters(&set, sconf.lo_freq, sconf.lo_phase, grid)?;
    emit_trace(&trace, &sink.path("trace.tsv"))?;
    let (amplitude, phase) = amp_phase(&trace);
    emit_real_series(&amplitude, &sink.path("amplitude.tsv"))?;
    emit_real_series(&phase, &sink.path("phase.tsv"))?;
    let analysis = config.signal.to_analysis()?;
    let (bins, mags) = phase_fft(&phase, analysis.window, analysis.zero_pad_factor)?;
    emit_slice(
        &Slice1D {
            label: "phase_fft".into(),
            axis_label: "fft_freq_mhz".into(),
            axis: bins,
            values: mags,
        },
        &sink.path("phase_fft.tsv"),
    )?;

    finalize(out_dir, config, started, &sink)
}

/// Amplitude/phase/FFT/peaks chain over an existing I/Q trace file.
pub fn run_analyze(config: &RunConfig, input: &Path, out_dir: &Path) -> Result<RunManifest> {
    let trace = read_trace(input)?;
    let started = unix_now();
    let mut sink = ArtifactSink::new(out_dir)?;
    echo_config(config, &mut sink)?;

    let (amplitude, phase) = amp_phase(&trace);
    emit_real_series(&amplitude, &sink.path("amplitude.tsv"))?;
    emit_real_series(&phase, &sink.path("phase.tsv"))?;
    let analysis = config.signal.to_analysis()?;
    let (bins, mags) = phase_fft(&phase, analysis.window, analysis.zero_pad_factor)?;
    let spectrum = Slice1D {
        label: "phase_fft".into(),
        axis_label: "fft_freq_mhz".into(),
        axis: bins,
        values: mags,
    };
    emit_slice(&spectrum, &sink.path("phase_fft.tsv"))?;
    let max = spectrum.values.iter().cloned().fold(0.0, f64::max);
    let peaks = detect_peaks(
        &spectrum,
        analysis.peak_threshold_rel * max,
        analysis.min_separation * 1e3, // the spectrum axis is MHz
    )?;
    emit_peaks(&peaks, &sink.path("peaks.tsv"))?;

    finalize(out_dir, config, started, &sink)
}

/// Count peaks in a stored slice and estimate the density per unit span.
pub fn run_density(
    config: &RunConfig,
    input: &Path,
    threshold: f64,
    min_separation: Option<f64>,
    out_dir: &Path,
) -> Result<(RunManifest, f64, usize)> {
    if !(threshold > 0.0) {
        return Err(CliError::Config(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let slice = read_slice(input)?;
    let started = unix_now();
    let mut sink = ArtifactSink::new(out_dir)?;
    echo_config(config, &mut sink)?;

    let separation = min_separation.unwrap_or(config.signal.min_separation_ghz);
    let peaks = detect_peaks(&slice, threshold, separation)?;
    let density = spectral_density(&peaks).map_err(CliError::numerical)?;
    emit_peaks(&peaks, &sink.path("peaks.tsv"))?;

    let manifest = finalize(out_dir, config, started, &sink)?;
    Ok((manifest, density, peaks.count()))
}
