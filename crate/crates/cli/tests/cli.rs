//! End-to-end checks of the command-line surface: artifact determinism,
//! exit codes, and the structure of a coarse sweep run.

use std::path::Path;
use std::process::Command;

use ringdown_cli::config::RunConfig;
use ringdown_cli::manifest::RunManifest;
use ringdown_cli::runner;

fn coarse_config() -> RunConfig {
    let mut config = RunConfig::parse("recipe = \"two-tone-map\"").unwrap();
    config.grid_scale = 0.015; // three sweep points
    config
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.toml")
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn repeated_runs_are_byte_identical_across_worker_budgets() {
    let config = coarse_config();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let manifest_a = runner::run(&config, dir_a.path()).unwrap();
    let manifest_b = runner::run(&config, dir_b.path()).unwrap();

    let mut config_wide = config.clone();
    config_wide.workers = 8;
    let dir_c = tempfile::tempdir().unwrap();
    let manifest_c = runner::run(&config_wide, dir_c.path()).unwrap();

    let a = artifact_bytes(dir_a.path());
    let b = artifact_bytes(dir_b.path());
    assert_eq!(a, b, "same-config reruns differ");

    // The worker-count run echoes a different config.toml (workers = 8) but
    // every computed artifact must match byte for byte.
    let c = artifact_bytes(dir_c.path());
    for ((name_a, bytes_a), (name_c, bytes_c)) in a.iter().zip(&c) {
        assert_eq!(name_a, name_c);
        if name_a != "config.toml" {
            assert_eq!(bytes_a, bytes_c, "{name_a} differs across worker budgets");
        }
    }

    assert_eq!(manifest_a.artifacts, manifest_b.artifacts);
    let data_sums = |m: &RunManifest| {
        m.artifacts
            .iter()
            .filter(|a| a.path != "config.toml")
            .map(|a| (a.path.clone(), a.sha256.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(data_sums(&manifest_a), data_sums(&manifest_c));
}

#[test]
fn coarse_sweep_emits_expected_artifact_set() {
    let config = coarse_config();
    let dir = tempfile::tempdir().unwrap();
    let manifest = runner::run(&config, dir.path()).unwrap();
    manifest.verify(dir.path()).unwrap();
    for file in [
        "config.toml",
        "population_grid.tsv",
        "population_grid.bin",
        "phase_vmap.tsv",
        "homodyne_vmap.tsv",
        "dc_slice.tsv",
        "quasi_energies.tsv",
    ] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    // Text and binary population grids carry identical payloads.
    let text = ringdown_cli::artifacts::read_grid(&dir.path().join("population_grid.tsv")).unwrap();
    let binary =
        ringdown_cli::artifacts::read_grid(&dir.path().join("population_grid.bin")).unwrap();
    assert_eq!(text.values, binary.values);
    assert_eq!(text.row_values, binary.row_values);

    // Re-parsing the echoed config reproduces the resolved configuration.
    let echoed = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed, config);

    // Every non-manifest file is listed in the manifest.
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|name| name != "manifest.toml")
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = manifest.artifacts.iter().map(|a| a.path.clone()).collect();
    listed.sort();
    assert_eq!(on_disk, listed);
}

#[test]
fn exit_codes_follow_the_contract() {
    let bin = env!("CARGO_BIN_EXE_ringdown");

    // Config error: malformed configuration file.
    let dir = tempfile::tempdir().unwrap();
    let bad_config = dir.path().join("bad.toml");
    std::fs::write(&bad_config, "recipe = \"two-tone-map\"\nbogus = 1").unwrap();
    let status = Command::new(bin)
        .args(["sweep", "--config"])
        .arg(&bad_config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Config error: unknown recipe.
    let status = Command::new(bin)
        .args(["sweep", "not-a-recipe", "--out"])
        .arg(dir.path().join("out2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // I/O error: missing input file.
    let status = Command::new(bin)
        .args(["density", "--input"])
        .arg(dir.path().join("missing.tsv"))
        .args(["--threshold", "1.0", "--out"])
        .arg(dir.path().join("out3"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));

    // Numerical error: degenerate perturbation denominators.
    let degenerate = dir.path().join("degenerate.toml");
    std::fs::write(
        &degenerate,
        "[perturb]\nomega1 = 3.0\nomega2 = 3.0\nsweep_lo = 3.2\nsweep_hi = 3.4\nsweep_points = 3\n",
    )
    .unwrap();
    let status = Command::new(bin)
        .args(["perturb", "--config"])
        .arg(&degenerate)
        .arg("--out")
        .arg(dir.path().join("out4"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // Success path: recipe listing.
    let output = Command::new(bin).args(["sweep", "--list"]).output().unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("two-tone-map"));
}

#[test]
fn density_command_counts_planted_peaks() {
    let bin = env!("CARGO_BIN_EXE_ringdown");
    let dir = tempfile::tempdir().unwrap();

    // Plant a synthetic slice with 10 peaks over exactly 2 GHz.
    let n = 401;
    let axis: Vec<f64> = (0..n).map(|k| 3.0 + 2.0 * k as f64 / (n - 1) as f64).collect();
    let mut values = vec![1.0; n];
    for p in 0..10 {
        values[20 + 38 * p] = 150.0;
    }
    let slice = ringdown_core::signal::Slice1D {
        label: "planted".into(),
        axis_label: "freq_ghz".into(),
        axis,
        values,
    };
    let input = dir.path().join("slice.tsv");
    ringdown_cli::artifacts::emit_slice(&slice, &input).unwrap();

    let out = dir.path().join("out");
    let output = Command::new(bin)
        .args(["density", "--input"])
        .arg(&input)
        .args(["--threshold", "120", "--min-separation", "0.05", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("10 peaks"), "{stdout}");
    assert!(stdout.contains("5 per unit span"), "{stdout}");
    let peaks = ringdown_cli::artifacts::read_peaks(&out.join("peaks.tsv")).unwrap();
    assert_eq!(peaks.count(), 10);
}
