//! Recipe execution: resolve the configuration, run the sweep inside a
//! local worker pool, persist every artifact, and seal the manifest.

use std::path::{Path, PathBuf};

use ringdown_core::evolve::{evolve, EvolveRequest, Observable};
use ringdown_core::experiments::{
    recipe_by_name, run_amplitude_sweep, run_detuning_study, run_drive_frequency_map,
    run_duration_sweep, run_gap_sweep, run_interaction_study, run_two_pulse_amplitude_control,
    run_two_pulse_phase_control, SweepRecipe, SweptParameter,
};
use ringdown_core::signal::{Slice1D, SpectralMap, TimeGrid};

use crate::artifacts::{
    emit_grid, emit_peaks, emit_real_series, emit_series, emit_slice, GridArtifact,
};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{unix_now, RunManifest};

/// Collects relative paths of everything written under the output directory.
pub struct ArtifactSink {
    out_dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactSink {
    pub fn new(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(PathBuf::from(name));
        self.out_dir.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn spectral_map_grid(map: &SpectralMap, label: &str) -> Result<GridArtifact> {
    GridArtifact::new(
        label,
        &map.sweep_label,
        map.sweep_values.clone(),
        "fft_freq_mhz",
        map.freq_bins.clone(),
        map.magnitudes.iter().copied().collect(),
    )
}

pub fn time_grid_grid(grid: &TimeGrid, label: &str) -> Result<GridArtifact> {
    GridArtifact::new(
        label,
        &grid.sweep_label,
        grid.sweep_values.clone(),
        "time_ns",
        grid.times.clone(),
        grid.values.iter().copied().collect(),
    )
}

/// Stack slices sharing an axis into a 2D grid keyed by the stack values.
pub fn slice_stack_grid(
    stack: &[(f64, Slice1D)],
    label: &str,
    row_label: &str,
) -> Result<GridArtifact> {
    let first = stack
        .first()
        .ok_or_else(|| CliError::Numerical("empty slice stack".into()))?;
    let mut values = Vec::with_capacity(stack.len() * first.1.axis.len());
    for (_, slice) in stack {
        values.extend_from_slice(&slice.values);
    }
    GridArtifact::new(
        label,
        row_label,
        stack.iter().map(|(v, _)| *v).collect(),
        &first.1.axis_label,
        first.1.axis.clone(),
        values,
    )
}

fn quasi_energy_grid(table: &[(f64, Vec<f64>)]) -> Result<GridArtifact> {
    let n_branches = table.first().map(|(_, b)| b.len()).unwrap_or(0);
    GridArtifact::new(
        "quasi_energies_ghz",
        "drive_freq_ghz",
        table.iter().map(|(f, _)| *f).collect(),
        "branch",
        (0..n_branches).map(|k| k as f64).collect(),
        table.iter().flat_map(|(_, b)| b.iter().copied()).collect(),
    )
}

/// Build the recipe from the configuration, with config-level analysis and
/// solver settings applied.
pub fn configured_recipe(config: &RunConfig, name: &str) -> Result<SweepRecipe> {
    let mut recipe = recipe_by_name(name, config.seed, config.grid_scale)?;
    recipe.analysis = config.signal.to_analysis()?;
    recipe.solver = config.solver.to_options();
    Ok(recipe)
}

/// Execute the named recipe and write its artifact set.
pub fn execute_recipe(config: &RunConfig, name: &str, sink: &mut ArtifactSink) -> Result<()> {
    let recipe = configured_recipe(config, name)?;
    match recipe.swept {
        SweptParameter::DriveFrequency { .. } => {
            let out = run_drive_frequency_map(&recipe)?;
            emit_grid(
                &time_grid_grid(&out.population, "collective_population")?,
                &sink.path("population_grid.tsv"),
            )?;
            emit_grid(
                &time_grid_grid(&out.population, "collective_population")?,
                &sink.path("population_grid.bin"),
            )?;
            emit_grid(
                &spectral_map_grid(&out.phase_map, "relative_phase_fft")?,
                &sink.path("phase_vmap.tsv"),
            )?;
            emit_grid(
                &spectral_map_grid(&out.homodyne_map, "homodyne_phase_fft")?,
                &sink.path("homodyne_vmap.tsv"),
            )?;
            let tolerance = recipe
                .analysis
                .dc_tolerance_mhz
                .unwrap_or(1e3 / recipe.post_time);
            let slice =
                ringdown_core::signal::zero_frequency_slice(&out.homodyne_map, tolerance)?;
            emit_slice(&slice, &sink.path("dc_slice.tsv"))?;
            if let Some(table) = &out.quasi_energies {
                emit_grid(&quasi_energy_grid(table)?, &sink.path("quasi_energies.tsv"))?;
            }
        }
        SweptParameter::PulseDuration { .. } => {
            let out = run_duration_sweep(&recipe)?;
            emit_grid(
                &slice_stack_grid(&out.dc_slices, "dc_slices_by_duration", "duration_ns")?,
                &sink.path("dc_stack.tsv"),
            )?;
            emit_slice(&out.averaged, &sink.path("averaged_slice.tsv"))?;
            emit_peaks(&out.peaks, &sink.path("peaks.tsv"))?;
        }
        SweptParameter::PulseAmplitude { .. } => {
            let out = run_amplitude_sweep(&recipe, 4.1)?;
            emit_grid(
                &slice_stack_grid(&out.zero_time_stack, "zero_time_by_amplitude", "amplitude_ghz")?,
                &sink.path("zero_time_stack.tsv"),
            )?;
            emit_grid(
                &slice_stack_grid(&out.dc_stack, "dc_by_amplitude", "amplitude_ghz")?,
                &sink.path("dc_stack.tsv"),
            )?;
            emit_slice(&out.saturation_cut, &sink.path("saturation_cut.tsv"))?;
        }
        SweptParameter::FirstPulseAmplitude { .. } => {
            let out = run_two_pulse_amplitude_control(&recipe)?;
            emit_grid(
                &time_grid_grid(&out.grid, "post_second_pulse_population")?,
                &sink.path("control_grid.tsv"),
            )?;
            emit_real_series(&out.reference, &sink.path("reference.tsv"))?;
        }
        SweptParameter::FirstPulsePhase { .. } => {
            let out = run_two_pulse_phase_control(&recipe)?;
            emit_grid(
                &time_grid_grid(&out.grid, "population_by_phase")?,
                &sink.path("phase_grid.tsv"),
            )?;
        }
        SweptParameter::InterPulseGap { .. } => {
            let out = run_gap_sweep(&recipe)?;
            emit_grid(
                &time_grid_grid(&out.grid, "population_by_gap")?,
                &sink.path("gap_grid.tsv"),
            )?;
            emit_real_series(&out.isolated, &sink.path("isolated.tsv"))?;
        }
        SweptParameter::Detuning { .. } => {
            let out = run_detuning_study(&recipe)?;
            for (tag, case) in [("detuned", &out.detuned), ("degenerate", &out.degenerate)] {
                emit_real_series(
                    &case.population,
                    &sink.path(&format!("{tag}_population.tsv")),
                )?;
                let spectrum = Slice1D {
                    label: format!("{tag}_post_pulse_fft"),
                    axis_label: "fft_freq_mhz".into(),
                    axis: case.post_pulse_spectrum.0.clone(),
                    values: case.post_pulse_spectrum.1.clone(),
                };
                emit_slice(&spectrum, &sink.path(&format!("{tag}_postpulse_fft.tsv")))?;
                emit_grid(
                    &spectral_map_grid(&case.phase_map, &format!("{tag}_phase_fft"))?,
                    &sink.path(&format!("{tag}_phase_vmap.tsv")),
                )?;
            }
        }
        SweptParameter::Coupling { .. } => {
            let entries = run_interaction_study(&recipe)?;
            for (i, entry) in entries.iter().enumerate() {
                emit_grid(
                    &spectral_map_grid(
                        &entry.population_map,
                        &format!("population_fft_j{}", entry.coupling),
                    )?,
                    &sink.path(&format!("population_fft_{i}.tsv")),
                )?;
                emit_grid(
                    &spectral_map_grid(&entry.phase_map, &format!("phase_fft_j{}", entry.coupling))?,
                    &sink.path(&format!("phase_vmap_{i}.tsv")),
                )?;
            }
        }
    }
    Ok(())
}

/// Run a configuration end to end inside a worker pool of the configured
/// size: artifacts, resolved-config echo, and verified manifest.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    let recipe_name = config
        .recipe
        .clone()
        .ok_or_else(|| CliError::Config("no recipe named in the configuration".into()))?;
    let started = unix_now();
    let mut sink = ArtifactSink::new(out_dir)?;

    let resolved = config.resolved_toml()?;
    std::fs::write(sink.path("config.toml"), &resolved)
        .map_err(|e| CliError::Io(format!("writing config echo: {e}")))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    pool.install(|| execute_recipe(config, &recipe_name, &mut sink))?;

    let manifest = RunManifest::build(out_dir, &resolved, config.seed, started, sink.written())?;
    manifest.verify(out_dir)?;
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// `simulate`: one inline model + protocol, observables persisted as series.
pub fn run_simulate(config: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    let model = config
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a [model] section".into()))?;
    let protocol_config = config
        .protocol
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a [protocol] section".into()))?;
    let ensemble = model.to_ensemble()?;
    let protocol = protocol_config.to_protocol()?;

    let started = unix_now();
    let mut sink = ArtifactSink::new(out_dir)?;
    let resolved = config.resolved_toml()?;
    std::fs::write(sink.path("config.toml"), &resolved)
        .map_err(|e| CliError::Io(format!("writing config echo: {e}")))?;

    let mut observables = vec![
        Observable::CollectivePopulation,
        Observable::CollectiveCoherence,
    ];
    for site in 0..ensemble.n_sites() {
        observables.push(Observable::SiteCoherence(site));
        observables.push(Observable::SitePopulation(site));
    }
    let req = EvolveRequest::new(ensemble, protocol, observables)
        .with_tolerances(config.solver.rtol, config.solver.atol);
    let series = evolve(&req)?;
    for (label, data) in &series {
        emit_series(data, &sink.path(&format!("{label}.tsv")))?;
    }

    let manifest = RunManifest::build(out_dir, &resolved, config.seed, started, sink.written())?;
    manifest.verify(out_dir)?;
    manifest.write(out_dir)?;
    Ok(manifest)
}
