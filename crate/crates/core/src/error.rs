//! Error types for the library.

use thiserror::Error;

/// Errors from sphere-geometry operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    /// A data column has norm below `1e-12` and cannot be normalized.
    #[error("column {0} has norm below 1e-12 and cannot be normalized")]
    ZeroColumn(usize),
    /// A normalized data point is not strictly inside the open half-sphere
    /// centered at the Karcher mean.
    #[error("data point {index} lies outside the open half-sphere at the mean (dot = {dot:.3e})")]
    HalfSphereViolation { index: usize, dot: f64 },
    /// The exponential map is only defined for tangent norms below pi/2.
    #[error("tangent vector norm {norm} is not below pi/2; exponential map undefined")]
    NormTooLarge { norm: f64 },
    /// The logarithm map is only defined strictly inside the open half-sphere.
    #[error("point outside the open half-sphere of the base (dot = {dot:.3e})")]
    OutsideHalfSphere { dot: f64 },
    /// The Karcher mean iteration hit its iteration cap.
    #[error("Karcher mean did not converge within {0} iterations")]
    NoConvergence(usize),
    /// The Euclidean mean of the points is numerically zero, so there is no
    /// direction to initialize the Karcher iteration from.
    #[error("Euclidean mean of the points is numerically zero")]
    DegenerateMean,
    /// A vector fails the unit-norm invariant.
    #[error("vector norm {norm} is not 1 within 1e-12")]
    NotUnit { norm: f64 },
    /// A vector fails the tangency invariant at its base point.
    #[error("vector is not tangent to the base point (dot = {dot:.3e})")]
    NotTangent { dot: f64 },
    /// Base points of two arguments that must share a tangent space differ.
    #[error("base points differ between arguments")]
    BaseMismatch,
    /// Template count k must satisfy 1 <= k <= n - 1.
    #[error("{k} template columns invalid for sphere dimension {n} (need 1..={max})")]
    BadTemplateCount { k: usize, n: usize, max: usize },
}

/// Errors from the nonnegative least squares solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnlsError {
    /// The active-set loop exceeded its pivot budget, which signals numerical
    /// degeneracy of the instance.
    #[error("active-set loop exceeded {max_pivots} pivots{}", column.map(|c| format!(" on column {c}")).unwrap_or_default())]
    MaxIterations {
        max_pivots: usize,
        column: Option<usize>,
    },
    /// Template and data dimensions are inconsistent.
    #[error("template matrix is {n}x{k} but data has {rows} rows")]
    DimensionMismatch { n: usize, k: usize, rows: usize },
}

/// Errors from the direct-search machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    /// The tangent matrix columns are linearly dependent, so the requested
    /// orthogonal complement frame is not well defined at full size.
    #[error("tangent matrix columns are rank deficient (smallest singular value {smallest:.3e})")]
    RankDeficient { smallest: f64 },
}

/// Top-level error for the factorization driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TsnmfError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Nnls(#[from] NnlsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// Fewer distinct data directions than requested templates.
    #[error("need {needed} distinct data directions, found {found}")]
    InsufficientData { needed: usize, found: usize },
    /// Spread contraction hit its iteration cap without reaching epsilon.
    #[error("spread contraction did not reach epsilon within {0} iterations")]
    ContractionStalled(usize),
}

/// Errors from data ingestion, preprocessing and serialization.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cell at row {row}, column {col} is not numeric: {text:?}")]
    ParseError {
        row: usize,
        col: usize,
        text: String,
    },
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("file contains no data")]
    EmptyFile,
    #[error("unexpected data shape: {detail}")]
    SchemaMismatch { detail: String },
    #[error("label column {requested} invalid: {detail}")]
    BadLabelColumn { requested: String, detail: String },
    #[error("data point {index} has zero norm after preprocessing")]
    ZeroPoint { index: usize },
    #[error("scatter emission requires k = 2, result has k = {0}")]
    WrongK(usize),
    #[error("result directory is missing {0}")]
    MissingFile(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
