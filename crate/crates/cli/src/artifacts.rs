//! Deterministic artifact formats.
//!
//! Text artifacts are delimiter-separated numeric tables with a commented
//! header block; floats are printed with Rust's shortest-round-trip
//! formatting, so read-back is exact. The binary grid container is
//! length-prefixed little-endian: magic `RGD1`, u32 version, u32 ndims,
//! u64 dims, then the f64 payload in row-major order.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use ringdown_core::evolve::TimeSeries;
use ringdown_core::signal::{PeakSet, QuadratureTrace, RealSeries, Slice1D};

use crate::error::{CliError, Result};

pub const GRID_MAGIC: &[u8; 4] = b"RGD1";
pub const GRID_VERSION: u32 = 1;

/// A labelled 2D table with named axes — the common shape of every map,
/// stack, and time grid this tool emits.
#[derive(Debug, Clone, PartialEq)]
pub struct GridArtifact {
    pub label: String,
    pub row_label: String,
    pub row_values: Vec<f64>,
    pub col_label: String,
    pub col_values: Vec<f64>,
    /// Row-major, `row_values.len() × col_values.len()`.
    pub values: Vec<f64>,
}

impl GridArtifact {
    pub fn new(
        label: impl Into<String>,
        row_label: impl Into<String>,
        row_values: Vec<f64>,
        col_label: impl Into<String>,
        col_values: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let artifact = Self {
            label: label.into(),
            row_label: row_label.into(),
            row_values,
            col_label: col_label.into(),
            col_values,
            values,
        };
        artifact.check()?;
        Ok(artifact)
    }

    fn check(&self) -> Result<()> {
        if self.values.len() != self.row_values.len() * self.col_values.len() {
            return Err(CliError::Io(format!(
                "grid '{}' has {} values for a {}x{} shape",
                self.label,
                self.values.len(),
                self.row_values.len(),
                self.col_values.len()
            )));
        }
        for (name, vals) in [
            ("row axis", &self.row_values),
            ("col axis", &self.col_values),
            ("payload", &self.values),
        ] {
            if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                return Err(CliError::Io(format!(
                    "grid '{}' {name} has a non-finite value at index {i}",
                    self.label
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.col_values.len() + col]
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
    file.write_all(bytes)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn header_lines(kind: &str, fields: &[(&str, String)]) -> String {
    let mut out = format!("# ringdown {kind} v1\n");
    for (key, value) in fields {
        let _ = writeln!(out, "# {key}: {value}");
    }
    out
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_header<'a>(
    text: &'a str,
    kind: &str,
) -> Result<(std::collections::BTreeMap<String, String>, Vec<&'a str>)> {
    let mut fields = std::collections::BTreeMap::new();
    let mut data = Vec::new();
    let mut saw_magic = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if rest == format!("ringdown {kind} v1") {
                saw_magic = true;
            } else if let Some((key, value)) = rest.split_once(':') {
                fields.insert(key.trim().to_string(), value.trim().to_string());
            }
        } else if !line.trim().is_empty() {
            data.push(line);
        }
    }
    if !saw_magic {
        return Err(CliError::Io(format!("not a ringdown {kind} file")));
    }
    Ok((fields, data))
}

fn field<'a>(
    fields: &'a std::collections::BTreeMap<String, String>,
    key: &str,
) -> Result<&'a str> {
    fields
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::Io(format!("missing header field '{key}'")))
}

fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| CliError::Io(format!("bad float '{tok}': {e}")))
        })
        .collect()
}

/// Write a grid as text (`.tsv`-style) or binary (`.bin`), by extension.
pub fn emit_grid(grid: &GridArtifact, path: &Path) -> Result<()> {
    grid.check()?;
    if path.extension().and_then(|e| e.to_str()) == Some("bin") {
        emit_grid_binary(grid, path)
    } else {
        emit_grid_text(grid, path)
    }
}

fn emit_grid_text(grid: &GridArtifact, path: &Path) -> Result<()> {
    let mut out = header_lines(
        "grid",
        &[
            ("label", grid.label.clone()),
            ("rows", grid.row_label.clone()),
            ("row_values", join_floats(&grid.row_values)),
            ("cols", grid.col_label.clone()),
            ("col_values", join_floats(&grid.col_values)),
        ],
    );
    let n_cols = grid.col_values.len();
    for row in 0..grid.row_values.len() {
        let line = join_floats(&grid.values[row * n_cols..(row + 1) * n_cols]);
        out.push_str(&line);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn emit_grid_binary(grid: &GridArtifact, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(32 + 8 * grid.values.len());
    bytes.extend_from_slice(GRID_MAGIC);
    bytes.extend_from_slice(&GRID_VERSION.to_le_bytes());
    bytes.extend_from_slice(&2u32.to_le_bytes());
    bytes.extend_from_slice(&(grid.row_values.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(grid.col_values.len() as u64).to_le_bytes());
    for axis in [&grid.row_values, &grid.col_values] {
        for v in axis.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in &grid.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_grid(path: &Path) -> Result<GridArtifact> {
    if path.extension().and_then(|e| e.to_str()) == Some("bin") {
        read_grid_binary(path)
    } else {
        read_grid_text(path)
    }
}

fn read_grid_text(path: &Path) -> Result<GridArtifact> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let (fields, data) = parse_header(&text, "grid")?;
    let row_values = parse_floats(field(&fields, "row_values")?)?;
    let col_values = parse_floats(field(&fields, "col_values")?)?;
    let mut values = Vec::with_capacity(row_values.len() * col_values.len());
    for line in data {
        values.extend(parse_floats(line)?);
    }
    GridArtifact::new(
        field(&fields, "label")?.to_string(),
        field(&fields, "rows")?.to_string(),
        row_values,
        field(&fields, "cols")?.to_string(),
        col_values,
        values,
    )
}

fn read_grid_binary(path: &Path) -> Result<GridArtifact> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| CliError::Io(format!("opening {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[0..4] != GRID_MAGIC {
        return Err(CliError::Io("not a ringdown binary grid".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != GRID_VERSION {
        return Err(CliError::Io(format!("unsupported grid version {version}")));
    }
    let ndims = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if ndims != 2 {
        return Err(CliError::Io(format!("expected 2 dims, got {ndims}")));
    }
    let n_rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let n_cols = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let mut offset = 28;
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let end = offset + 8 * n;
        if end > bytes.len() {
            return Err(CliError::Io("binary grid truncated".into()));
        }
        let vals = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset = end;
        Ok(vals)
    };
    let row_values = take(n_rows)?;
    let col_values = take(n_cols)?;
    let values = take(n_rows * n_cols)?;
    GridArtifact::new("binary", "rows", row_values, "cols", col_values, values)
}

/// Complex time series as a three-column table (t, re, im).
pub fn emit_series(series: &TimeSeries, path: &Path) -> Result<()> {
    if let Some(i) = series
        .values
        .iter()
        .position(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(CliError::Io(format!(
            "series '{}' has a non-finite value at index {i}",
            series.label
        )));
    }
    let mut out = header_lines(
        "series",
        &[
            ("label", series.label.clone()),
            ("t0_ns", series.t0.to_string()),
            ("dt_ns", series.dt.to_string()),
        ],
    );
    for (k, z) in series.values.iter().enumerate() {
        let _ = writeln!(out, "{} {} {}", series.time(k), z.re, z.im);
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_series(path: &Path) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let (fields, data) = parse_header(&text, "series")?;
    let t0: f64 = field(&fields, "t0_ns")?
        .parse()
        .map_err(|e| CliError::Io(format!("bad t0: {e}")))?;
    let dt: f64 = field(&fields, "dt_ns")?
        .parse()
        .map_err(|e| CliError::Io(format!("bad dt: {e}")))?;
    let mut values = Vec::with_capacity(data.len());
    for line in data {
        let cols = parse_floats(line)?;
        if cols.len() != 3 {
            return Err(CliError::Io(format!(
                "series row has {} columns, expected 3",
                cols.len()
            )));
        }
        values.push(C64::new(cols[1], cols[2]));
    }
    Ok(TimeSeries {
        t0,
        dt,
        values,
        label: field(&fields, "label")?.to_string(),
    })
}

/// Real series (slice in time, amplitude, phase) as a two-column table.
pub fn emit_real_series(series: &RealSeries, path: &Path) -> Result<()> {
    if let Some(i) = series.values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Io(format!(
            "series '{}' has a non-finite value at index {i}",
            series.label
        )));
    }
    let mut out = header_lines(
        "real_series",
        &[
            ("label", series.label.clone()),
            ("t0_ns", series.t0.to_string()),
            ("dt_ns", series.dt.to_string()),
        ],
    );
    for (k, v) in series.values.iter().enumerate() {
        let _ = writeln!(out, "{} {}", series.time(k), v);
    }
    write_atomic(path, out.as_bytes())
}

/// Baseband I/Q trace with LO metadata (t, I, Q columns).
pub fn emit_trace(trace: &QuadratureTrace, path: &Path) -> Result<()> {
    let mut out = header_lines(
        "trace",
        &[
            ("t0_ns", trace.t0.to_string()),
            ("dt_ns", trace.dt.to_string()),
            ("lo_freq_ghz", trace.lo_freq.to_string()),
            ("lo_phase_rad", trace.lo_phase.to_string()),
        ],
    );
    for k in 0..trace.len() {
        let _ = writeln!(
            out,
            "{} {} {}",
            trace.time(k),
            trace.i_samples[k],
            trace.q_samples[k]
        );
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_trace(path: &Path) -> Result<QuadratureTrace> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let (fields, data) = parse_header(&text, "trace")?;
    let get = |key: &str| -> Result<f64> {
        field(&fields, key)?
            .parse()
            .map_err(|e| CliError::Io(format!("bad {key}: {e}")))
    };
    let mut i_samples = Vec::with_capacity(data.len());
    let mut q_samples = Vec::with_capacity(data.len());
    for line in data {
        let cols = parse_floats(line)?;
        if cols.len() != 3 {
            return Err(CliError::Io(format!(
                "trace row has {} columns, expected 3",
                cols.len()
            )));
        }
        i_samples.push(cols[1]);
        q_samples.push(cols[2]);
    }
    Ok(QuadratureTrace {
        t0: get("t0_ns")?,
        dt: get("dt_ns")?,
        i_samples,
        q_samples,
        lo_freq: get("lo_freq_ghz")?,
        lo_phase: get("lo_phase_rad")?,
    })
}

/// Labelled 1D slice (axis, value columns).
pub fn emit_slice(slice: &Slice1D, path: &Path) -> Result<()> {
    if let Some(i) = slice.values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Io(format!(
            "slice '{}' has a non-finite value at index {i}",
            slice.label
        )));
    }
    let mut out = header_lines(
        "slice",
        &[
            ("label", slice.label.clone()),
            ("axis", slice.axis_label.clone()),
        ],
    );
    for (x, v) in slice.axis.iter().zip(&slice.values) {
        let _ = writeln!(out, "{x} {v}");
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_slice(path: &Path) -> Result<Slice1D> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let (fields, data) = parse_header(&text, "slice")?;
    let mut axis = Vec::with_capacity(data.len());
    let mut values = Vec::with_capacity(data.len());
    for line in data {
        let cols = parse_floats(line)?;
        if cols.len() != 2 {
            return Err(CliError::Io(format!(
                "slice row has {} columns, expected 2",
                cols.len()
            )));
        }
        axis.push(cols[0]);
        values.push(cols[1]);
    }
    Ok(Slice1D {
        label: field(&fields, "label")?.to_string(),
        axis_label: field(&fields, "axis")?.to_string(),
        axis,
        values,
    })
}

/// Detected peaks with their detection settings; an empty set emits a
/// header-only file.
pub fn emit_peaks(peaks: &PeakSet, path: &Path) -> Result<()> {
    let density = if peaks.span.1 > peaks.span.0 {
        (peaks.count() as f64 / (peaks.span.1 - peaks.span.0)).to_string()
    } else {
        "undefined".to_string()
    };
    let mut out = header_lines(
        "peaks",
        &[
            ("threshold", peaks.threshold.to_string()),
            ("min_separation_ghz", peaks.min_separation.to_string()),
            (
                "span_ghz",
                format!("{} {}", peaks.span.0, peaks.span.1),
            ),
            ("count", peaks.count().to_string()),
            ("density_per_ghz", density),
        ],
    );
    for p in &peaks.peaks {
        let _ = writeln!(out, "{} {}", p.freq, p.magnitude);
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_peaks(path: &Path) -> Result<PeakSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let (fields, data) = parse_header(&text, "peaks")?;
    let span_vals = parse_floats(field(&fields, "span_ghz")?)?;
    if span_vals.len() != 2 {
        return Err(CliError::Io("span must have two values".into()));
    }
    let mut peaks = Vec::with_capacity(data.len());
    for line in data {
        let cols = parse_floats(line)?;
        if cols.len() != 2 {
            return Err(CliError::Io(format!(
                "peak row has {} columns, expected 2",
                cols.len()
            )));
        }
        peaks.push(ringdown_core::signal::Peak {
            freq: cols[0],
            magnitude: cols[1],
        });
    }
    Ok(PeakSet {
        peaks,
        threshold: field(&fields, "threshold")?
            .parse()
            .map_err(|e| CliError::Io(format!("bad threshold: {e}")))?,
        min_separation: field(&fields, "min_separation_ghz")?
            .parse()
            .map_err(|e| CliError::Io(format!("bad min_separation: {e}")))?,
        span: (span_vals[0], span_vals[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ringdown_core::signal::Peak;
    use tempfile::tempdir;

    fn sample_grid() -> GridArtifact {
        GridArtifact::new(
            "test_grid",
            "freq_ghz",
            vec![3.0, 3.1, 3.2],
            "time_ns",
            vec![0.0, 0.25],
            vec![
                0.1,
                -2.5e-9,
                std::f64::consts::PI,
                1.0 / 3.0,
                6.02e23,
                -0.0,
            ],
        )
        .unwrap()
    }

    #[test]
    fn text_grid_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("grid.tsv");
        let grid = sample_grid();
        emit_grid(&grid, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(grid.values, back.values);
        assert_eq!(grid.row_values, back.row_values);
        assert_eq!(grid.col_values, back.col_values);
    }

    #[test]
    fn binary_grid_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("grid.bin");
        let grid = sample_grid();
        emit_grid(&grid, &path).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(grid.values, back.values);
        assert_eq!(grid.row_values, back.row_values);
    }

    #[test]
    fn nan_payload_is_rejected() {
        let grid = GridArtifact::new(
            "bad",
            "x",
            vec![1.0],
            "y",
            vec![1.0],
            vec![f64::NAN],
        );
        assert!(grid.is_err());
    }

    #[test]
    fn series_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("series.tsv");
        let series = TimeSeries {
            t0: 0.5,
            dt: 0.25,
            values: vec![C64::new(1.0, -2.0), C64::new(1.0 / 7.0, 3.3e-17)],
            label: "coh".into(),
        };
        emit_series(&series, &path).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(series, back);
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trace.tsv");
        let trace = QuadratureTrace {
            t0: 0.0,
            dt: 0.25,
            i_samples: vec![0.5, -0.25, 1e-300],
            q_samples: vec![0.0, 0.125, -7.0],
            lo_freq: 4.254,
            lo_phase: 0.1,
        };
        emit_trace(&trace, &path).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(trace, back);
    }

    #[test]
    fn empty_peaks_emit_header_only() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("peaks.tsv");
        let peaks = PeakSet {
            peaks: vec![],
            threshold: 120.0,
            min_separation: 0.002,
            span: (4.1, 4.6),
        };
        emit_peaks(&peaks, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.starts_with('#')));
        let back = read_peaks(&path).unwrap();
        assert_eq!(back.count(), 0);
        assert_eq!(back.span, (4.1, 4.6));
    }

    #[test]
    fn peaks_round_trip_with_density() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("peaks.tsv");
        let peaks = PeakSet {
            peaks: vec![
                Peak {
                    freq: 4.2,
                    magnitude: 130.0,
                },
                Peak {
                    freq: 4.35,
                    magnitude: 190.0,
                },
            ],
            threshold: 120.0,
            min_separation: 0.002,
            span: (4.1, 4.6),
        };
        emit_peaks(&peaks, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("density_per_ghz: 4"), "{text}");
        let back = read_peaks(&path).unwrap();
        assert_eq!(back, peaks);
    }
}
