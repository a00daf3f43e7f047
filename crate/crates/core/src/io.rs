//! Result serialization: matrices and traces as delimited text at 17
//! significant digits (lossless for f64), scatter plot data, and the run
//! manifest that makes a run reproducible.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{sha256_hex, Provenance};
use crate::driver::FactorizationResult;
use crate::error::DataError;
use crate::search::{IterationRecord, SearchConfig};

/// Format a float with 17 significant digits; round-trips f64 exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a matrix as comma-delimited rows.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_value(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<(), DataError> {
    std::fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (j, cell) in line.split(',').enumerate() {
            row.push(cell.trim().parse().map_err(|_| DataError::ParseError {
                row: i,
                col: j,
                text: cell.trim().to_string(),
            })?);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(DataError::RaggedRows {
                    row: i,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Render the iteration trace: one row per iteration with the accepted step
/// tag (or "reject"), the post-update step size, fit and spread.
pub fn trace_to_csv(trace: &[IterationRecord]) -> String {
    let mut out = String::from("i,step_tag,alpha,fit,spread\n");
    for rec in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            rec.i,
            rec.step.as_str(),
            format_value(rec.alpha),
            format_value(rec.fit),
            format_value(rec.spread)
        );
    }
    out
}

/// Digest and size of one written output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to re-run a factorization bit-identically: the full
/// configuration, dataset provenance, and digests of the written outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub k: usize,
    pub seed: u64,
    pub config: SearchConfig,
    pub provenance: Provenance,
    pub dropped_columns: Vec<usize>,
    pub fit: f64,
    pub initial_fit: f64,
    pub spread: f64,
    pub area: f64,
    pub timings_ms: BTreeMap<String, f64>,
    pub outputs: BTreeMap<String, FileDigest>,
}

/// Extra inputs for [`write_result`] beyond the factorization itself.
#[derive(Debug, Clone)]
pub struct WriteOptions {
    pub command: String,
    pub provenance: Provenance,
    pub labels: Option<Vec<String>>,
    pub timings_ms: BTreeMap<String, f64>,
}

fn write_output(
    dir: &Path,
    name: &str,
    content: &str,
    outputs: &mut BTreeMap<String, FileDigest>,
) -> Result<(), DataError> {
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    outputs.insert(
        name.to_string(),
        FileDigest {
            sha256: sha256_hex(content.as_bytes()),
            bytes: content.len() as u64,
        },
    );
    Ok(())
}

/// Write `W.csv`, `H.csv`, `trace.csv` (plus `labels.csv` when labels are
/// present) and `manifest.json` into `out_dir`. Returns the manifest.
pub fn write_result(
    result: &FactorizationResult,
    out_dir: &Path,
    opts: &WriteOptions,
) -> Result<RunManifest, DataError> {
    std::fs::create_dir_all(out_dir)?;
    let mut outputs = BTreeMap::new();
    write_output(
        out_dir,
        "W.csv",
        &matrix_to_csv(result.templates.matrix()),
        &mut outputs,
    )?;
    write_output(
        out_dir,
        "H.csv",
        &matrix_to_csv(result.coefficients.entries()),
        &mut outputs,
    )?;
    write_output(
        out_dir,
        "trace.csv",
        &trace_to_csv(&result.trace),
        &mut outputs,
    )?;
    if let Some(labels) = &opts.labels {
        let mut text = String::new();
        for l in labels {
            text.push_str(l);
            text.push('\n');
        }
        write_output(out_dir, "labels.csv", &text, &mut outputs)?;
    }
    let manifest = RunManifest {
        command: opts.command.clone(),
        k: result.template_count(),
        seed: result.config.seed,
        config: result.config.clone(),
        provenance: opts.provenance.clone(),
        dropped_columns: result.dropped_columns.clone(),
        fit: result.fit,
        initial_fit: result.initial_fit,
        spread: result.spread,
        area: result.area,
        timings_ms: opts.timings_ms.clone(),
        outputs,
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    std::fs::write(out_dir.join("manifest.json"), manifest_json + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, DataError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DataError::SchemaMismatch {
        detail: format!("manifest parse failure: {e}"),
    })
}

/// One scatter point: the two coefficient rows of a data point plus its
/// label (empty when the dataset has no labels).
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRecord {
    pub h1: f64,
    pub h2: f64,
    pub label: String,
}

/// Per-point scatter records from a k = 2 result: the x (y) coordinate is
/// the first (second) row of H.
pub fn scatter_records(
    h: &DMatrix<f64>,
    labels: Option<&[String]>,
) -> Result<Vec<ScatterRecord>, DataError> {
    if h.nrows() != 2 {
        return Err(DataError::WrongK(h.nrows()));
    }
    if let Some(labels) = labels {
        if labels.len() != h.ncols() {
            return Err(DataError::SchemaMismatch {
                detail: format!("{} labels for {} data points", labels.len(), h.ncols()),
            });
        }
    }
    Ok((0..h.ncols())
        .map(|j| ScatterRecord {
            h1: h[(0, j)],
            h2: h[(1, j)],
            label: labels.map(|l| l[j].clone()).unwrap_or_default(),
        })
        .collect())
}

pub fn scatter_to_csv(records: &[ScatterRecord]) -> String {
    let mut out = String::from("h1,h2,label\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{}",
            format_value(r.h1),
            format_value(r.h2),
            r.label
        );
    }
    out
}

/// Write `scatter.csv` for a k = 2 coefficient matrix.
pub fn write_scatter(
    h: &DMatrix<f64>,
    labels: Option<&[String]>,
    path: &Path,
) -> Result<(), DataError> {
    let records = scatter_records(h, labels)?;
    std::fs::write(path, scatter_to_csv(&records))?;
    Ok(())
}

/// Sweep-level manifest: one entry per epsilon with the member's seed, fit
/// and output directory (or its failure).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepManifest {
    pub command: String,
    pub k: usize,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub provenance: Provenance,
    pub points: Vec<SweepPointEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPointEntry {
    pub index: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub status: String,
    pub fit: Option<f64>,
    pub dir: Option<PathBuf>,
}

pub fn write_sweep_manifest(manifest: &SweepManifest, out_dir: &Path) -> Result<(), DataError> {
    let json =
        serde_json::to_string_pretty(manifest).expect("sweep manifest serialization cannot fail");
    std::fs::write(out_dir.join("sweep.json"), json + "\n")?;
    // Pareto trade-off table for plotting.
    let mut pareto = String::from("epsilon,fit\n");
    for p in &manifest.points {
        if let Some(fit) = p.fit {
            let _ = writeln!(pareto, "{},{}", format_value(p.epsilon), format_value(fit));
        }
    }
    std::fs::write(out_dir.join("pareto.csv"), pareto)?;
    Ok(())
}
