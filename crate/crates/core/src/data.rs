//! Dataset ingestion from delimited text and the ionosphere preprocessing
//! pipeline.
//!
//! Internally data points are always matrix columns; the `orientation`
//! option controls how a file maps onto that convention (UCI-style files
//! ship one point per row, which is the default).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::DataError;

/// Expected attribute count of the raw ionosphere file.
pub const IONOSPHERE_ATTRIBUTES: usize = 34;

/// How file rows/columns map onto data points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Each file row is one data point (UCI convention); the matrix is
    /// transposed on load.
    RowsArePoints,
    /// Each file column is one data point; the matrix is taken as-is.
    ColumnsArePoints,
}

/// Which column of a rows-as-points file carries the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Index(usize),
    Last,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub label_column: Option<LabelColumn>,
    pub orientation: Orientation,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            label_column: None,
            orientation: Orientation::RowsArePoints,
        }
    }
}

/// Where a dataset came from and what was done to it. Everything needed to
/// reproduce a run, minus the file itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub orientation: String,
    pub delimiter: String,
    pub has_header: bool,
    pub label_column: Option<String>,
    pub input_sha256: String,
    /// Human-readable log of preprocessing steps, one line per step.
    pub preprocessing: Vec<String>,
}

/// A data matrix (columns are points) with optional per-point labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: DMatrix<f64>,
    pub labels: Option<Vec<String>>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Number of data points m.
    pub fn point_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// Attribute dimension n.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Load a delimited numeric table, peeling off an optional label column.
pub fn load_delimited(path: &Path, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let bytes = std::fs::read(path)?;
    let digest = sha256_hex(&bytes);
    let mut dataset = parse_delimited(&bytes, opts)?;
    dataset.provenance.source = path.display().to_string();
    dataset.provenance.input_sha256 = digest;
    Ok(dataset)
}

/// Parse delimited bytes directly (the file-less core of [`load_delimited`]).
pub fn parse_delimited(bytes: &[u8], opts: &LoadOptions) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .from_reader(bytes);

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::SchemaMismatch {
            detail: format!("malformed delimited input: {e}"),
        })?;
        rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    if rows.is_empty() || rows.iter().all(|r| r.iter().all(|c| c.trim().is_empty())) {
        return Err(DataError::EmptyFile);
    }
    let width = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(DataError::RaggedRows {
                row: i,
                expected: width,
                found: row.len(),
            });
        }
    }
    if width == 0 {
        return Err(DataError::EmptyFile);
    }

    let label_index = match opts.label_column {
        None => None,
        Some(spec) => {
            if opts.orientation != Orientation::RowsArePoints {
                return Err(DataError::BadLabelColumn {
                    requested: format!("{spec:?}"),
                    detail: "label columns require rows-as-points orientation".to_string(),
                });
            }
            let idx = match spec {
                LabelColumn::Last => width - 1,
                LabelColumn::Index(i) => i,
            };
            if idx >= width {
                return Err(DataError::BadLabelColumn {
                    requested: format!("{idx}"),
                    detail: format!("file has only {width} columns"),
                });
            }
            Some(idx)
        }
    };

    let numeric_width = width - usize::from(label_index.is_some());
    if numeric_width == 0 {
        return Err(DataError::EmptyFile);
    }

    let mut labels = label_index.map(|_| Vec::with_capacity(rows.len()));
    let mut values: Vec<f64> = Vec::with_capacity(rows.len() * numeric_width);
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if Some(j) == label_index {
                labels
                    .as_mut()
                    .expect("label vec exists")
                    .push(cell.trim().to_string());
                continue;
            }
            let parsed: f64 = cell.trim().parse().map_err(|_| DataError::ParseError {
                row: i,
                col: j,
                text: cell.trim().to_string(),
            })?;
            values.push(parsed);
        }
    }

    // values is row-major over the file; build the internal
    // columns-are-points matrix.
    let file_rows = rows.len();
    let matrix = match opts.orientation {
        Orientation::RowsArePoints => DMatrix::from_fn(numeric_width, file_rows, |attr, point| {
            values[point * numeric_width + attr]
        }),
        Orientation::ColumnsArePoints => DMatrix::from_fn(file_rows, numeric_width, |r, c| {
            values[r * numeric_width + c]
        }),
    };

    Ok(Dataset {
        matrix,
        labels,
        provenance: Provenance {
            source: "<bytes>".to_string(),
            orientation: format!("{:?}", opts.orientation),
            delimiter: (opts.delimiter as char).to_string(),
            has_header: opts.has_header,
            label_column: opts.label_column.map(|l| format!("{l:?}")),
            input_sha256: sha256_hex(bytes),
            preprocessing: Vec::new(),
        },
    })
}

/// The ionosphere preprocessing pipeline:
/// 1. drop every data point whose first attribute is 0 (in the raw data a
///    zero there always marks class `b`),
/// 2. drop the first two attribute columns, which the row drop leaves
///    constant (1 and 0 respectively),
/// 3. normalize every remaining point to unit 2-norm.
///
/// The strict entry point checks the 34-attributes-plus-label schema and
/// that dropping is justified (first attribute binary, dropped columns
/// constant).
pub fn preprocess_ionosphere(raw: &Dataset) -> Result<Dataset, DataError> {
    apply_ionosphere_rules(raw, true)
}

/// Schema-relaxed variant: each rule applies only where its own trigger
/// condition holds, so running the pipeline on its own output changes
/// nothing.
pub fn preprocess_ionosphere_relaxed(raw: &Dataset) -> Result<Dataset, DataError> {
    apply_ionosphere_rules(raw, false)
}

fn apply_ionosphere_rules(raw: &Dataset, strict: bool) -> Result<Dataset, DataError> {
    let (n, m) = raw.matrix.shape();
    if strict {
        if n != IONOSPHERE_ATTRIBUTES {
            return Err(DataError::SchemaMismatch {
                detail: format!("expected {IONOSPHERE_ATTRIBUTES} attributes, found {n}"),
            });
        }
        if raw.labels.is_none() {
            return Err(DataError::SchemaMismatch {
                detail: "expected a class label per data point".to_string(),
            });
        }
    }
    if m == 0 {
        return Err(DataError::EmptyFile);
    }

    let mut log = raw.provenance.preprocessing.clone();

    // Rule 1: drop zero-flag points, gated on the first attribute actually
    // being a binary flag.
    let first_attr_binary = (0..m).all(|j| {
        let v = raw.matrix[(0, j)];
        v == 0.0 || v == 1.0
    });
    if strict && !first_attr_binary {
        return Err(DataError::SchemaMismatch {
            detail: "first attribute is not a 0/1 flag".to_string(),
        });
    }
    let retained: Vec<usize> = if first_attr_binary {
        (0..m).filter(|&j| raw.matrix[(0, j)] != 0.0).collect()
    } else {
        (0..m).collect()
    };
    if retained.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let dropped_points = m - retained.len();
    let mut line = String::new();
    let _ = write!(
        line,
        "dropped {dropped_points} of {m} points with first attribute 0"
    );
    if first_attr_binary {
        log.push(line);
    }

    // Rule 2: drop the two leading attribute rows, gated on each being
    // constant over the retained points.
    let is_constant = |attr: usize| -> bool {
        let first = raw.matrix[(attr, retained[0])];
        retained.iter().all(|&j| raw.matrix[(attr, j)] == first)
    };
    let drop_leading = n >= 2 && is_constant(0) && is_constant(1);
    if strict && !drop_leading {
        return Err(DataError::SchemaMismatch {
            detail: "leading attribute columns are not constant after the row drop".to_string(),
        });
    }
    let kept_attrs: Vec<usize> = if drop_leading {
        (2..n).collect()
    } else {
        (0..n).collect()
    };
    if kept_attrs.is_empty() {
        return Err(DataError::SchemaMismatch {
            detail: "no attributes left after dropping constants".to_string(),
        });
    }
    if drop_leading {
        log.push("removed the two constant leading attribute columns".to_string());
    }

    // Rule 3: normalize retained points. Points already unit within 1e-12
    // are left untouched so the pipeline is idempotent at the bit level.
    let mut matrix = DMatrix::zeros(kept_attrs.len(), retained.len());
    let mut normalized_count = 0usize;
    for (out_j, &j) in retained.iter().enumerate() {
        for (out_i, &i) in kept_attrs.iter().enumerate() {
            matrix[(out_i, out_j)] = raw.matrix[(i, j)];
        }
        let norm = matrix.column(out_j).norm();
        if norm < 1e-12 {
            return Err(DataError::ZeroPoint { index: j });
        }
        if (norm - 1.0).abs() > 1e-12 {
            let col = matrix.column(out_j) / norm;
            matrix.set_column(out_j, &col);
            normalized_count += 1;
        }
    }
    log.push(format!(
        "normalized {normalized_count} of {} points to unit 2-norm",
        retained.len()
    ));

    let labels = raw
        .labels
        .as_ref()
        .map(|l| retained.iter().map(|&j| l[j].clone()).collect());

    let mut provenance = raw.provenance.clone();
    provenance.preprocessing = log;
    Ok(Dataset {
        matrix,
        labels,
        provenance,
    })
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Parse an angle given either as decimal radians or as a fraction of pi
/// ("pi", "pi/4", "3pi/4", "0.5pi").
pub fn parse_angle(text: &str) -> Result<f64, String> {
    let t = text.trim().to_lowercase();
    if let Some(pos) = t.find("pi") {
        let (mult_str, rest) = t.split_at(pos);
        let rest = &rest[2..];
        let mult: f64 = if mult_str.is_empty() {
            1.0
        } else {
            mult_str
                .trim_end_matches('*')
                .parse()
                .map_err(|_| format!("bad multiplier in angle {text:?}"))?
        };
        let div: f64 = if rest.is_empty() {
            1.0
        } else if let Some(d) = rest.strip_prefix('/') {
            d.parse()
                .map_err(|_| format!("bad divisor in angle {text:?}"))?
        } else {
            return Err(format!("malformed angle {text:?}"));
        };
        if div == 0.0 {
            return Err(format!("zero divisor in angle {text:?}"));
        }
        Ok(mult * std::f64::consts::PI / div)
    } else {
        t.parse()
            .map_err(|_| format!("angle {text:?} is neither radians nor a pi fraction"))
    }
}

/// Parse a comma-separated list of angles.
pub fn parse_angle_list(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(',').filter(|p| !p.trim().is_empty()).collect();
    if parts.is_empty() {
        return Err("empty epsilon list".to_string());
    }
    parts.into_iter().map(parse_angle).collect()
}
