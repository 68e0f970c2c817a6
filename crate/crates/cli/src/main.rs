//! Command-line entry point: configuration ingestion, recipe execution,
//! deterministic persistence, and plot-ready data emission.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use ringdown_cli::commands;
use ringdown_cli::config::RunConfig;
use ringdown_cli::error::Result;
use ringdown_cli::runner;

#[derive(Parser)]
#[command(
    name = "ringdown",
    version,
    about = "Pulsed TLS-ensemble simulator and ring-down analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker budget override.
    #[arg(long)]
    workers: Option<usize>,
    /// Sweep-resolution multiplier override (1.0 = full resolution).
    #[arg(long)]
    grid_scale: Option<f64>,
}

impl CommonArgs {
    fn load_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        if let Some(scale) = self.grid_scale {
            config.grid_scale = scale;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a single inline model + protocol and persist the observables.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a named sweep recipe.
    Sweep {
        /// Recipe name (see `--list`).
        recipe: Option<String>,
        /// List the available recipes and exit.
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Quasi-energy table over a drive-frequency grid, both methods.
    Floquet {
        #[command(flatten)]
        common: CommonArgs,
        /// Sweep start, GHz.
        #[arg(long, default_value_t = 3.0)]
        freq_lo: f64,
        /// Sweep end, GHz.
        #[arg(long, default_value_t = 5.0)]
        freq_hi: f64,
        /// Number of sweep points.
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Drive amplitude, GHz.
        #[arg(long, default_value_t = 0.1)]
        amplitude: f64,
        /// Extended-space harmonic cutoff.
        #[arg(long, default_value_t = 15)]
        cutoff: usize,
    },
    /// Closed-form weak-drive phase spectrum for two coupled TLS.
    Perturb {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Synthesize a damped emitter set against an LO (homodyne demo).
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the amplitude/phase/FFT chain on an existing I/Q trace file.
    Analyze {
        /// Input trace (as written by `synth`).
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Count peaks in a stored slice and estimate the density per GHz.
    Density {
        /// Input slice file.
        #[arg(long)]
        input: PathBuf,
        /// Absolute peak threshold (a.u.).
        #[arg(long)]
        threshold: f64,
        /// Minimum peak separation in the axis units.
        #[arg(long)]
        min_separation: Option<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let config = common.load_config()?;
            let manifest = runner::run_simulate(&config, &common.out)?;
            println!(
                "simulate: {} artifacts in {}",
                manifest.artifacts.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Sweep {
            recipe,
            list,
            common,
        } => {
            if list {
                for name in ringdown_core::experiments::RECIPE_NAMES {
                    println!("{name}");
                }
                return Ok(());
            }
            let mut config = common.load_config()?;
            if let Some(name) = recipe {
                config.recipe = Some(name);
            }
            config.validate()?;
            let manifest = runner::run(&config, &common.out)?;
            println!(
                "sweep {}: {} artifacts in {}",
                config.recipe.as_deref().unwrap_or("?"),
                manifest.artifacts.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Floquet {
            common,
            freq_lo,
            freq_hi,
            points,
            amplitude,
            cutoff,
        } => {
            let config = common.load_config()?;
            let manifest = commands::run_floquet(
                &config,
                &common.out,
                (freq_lo, freq_hi),
                points,
                amplitude,
                cutoff,
            )?;
            println!(
                "floquet: {} artifacts in {}",
                manifest.artifacts.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Perturb { common } => {
            let config = common.load_config()?;
            let manifest = commands::run_perturb(&config, &common.out)?;
            println!(
                "perturb: {} artifacts in {}",
                manifest.artifacts.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Synth { common } => {
            let config = common.load_config()?;
            let manifest = commands::run_synth(&config, &common.out)?;
            println!(
                "synth: {} artifacts in {}",
                manifest.artifacts.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Analyze { input, common } => {
            let config = common.load_config()?;
            let manifest = commands::run_analyze(&config, &input, &common.out)?;
            println!(
                "analyze: {} artifacts in {}",
                manifest.artifacts.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Density {
            input,
            threshold,
            min_separation,
            common,
        } => {
            let config = common.load_config()?;
            let (manifest, density, count) =
                commands::run_density(&config, &input, threshold, min_separation, &common.out)?;
            println!(
                "density: {count} peaks → {density} per unit span; {} artifacts in {}",
                manifest.artifacts.len(),
                common.out.display()
            );
            Ok(())
        }
    }
}
