//! Geometry of the unit hypersphere S^{n-1}.
//!
//! Normalized data points and template columns live on the sphere; the search
//! itself runs in the tangent space at the Karcher mean of the data. This
//! module provides column normalization, the exponential and logarithm maps
//! at a base point, the Karcher mean, the geodesic spread `S(W)` of a
//! template matrix, and the hyper-area diagnostic `A(W)`.
//!
//! All operations here are pure; values are immutable once constructed and
//! safe to share across threads.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::FRAC_PI_2;

use crate::error::GeometryError;

/// Unit-norm tolerance for points on the sphere.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Tangency tolerance: |base . v| must not exceed this.
pub const TANGENCY_TOL: f64 = 1e-10;
/// A point is inside the open half-sphere at `base` iff base . point exceeds this.
pub const HALF_SPHERE_TOL: f64 = 1e-10;
/// Below this tangent norm the exponential map returns the base point exactly.
pub const EXP_ZERO_TOL: f64 = 1e-14;
/// Above dot = 1 - LOG_COINCIDENT_TOL the logarithm map returns the zero vector.
pub const LOG_COINCIDENT_TOL: f64 = 1e-12;
/// Convergence threshold on the mean-tangent norm of the Karcher iteration.
pub const KARCHER_TOL: f64 = 1e-10;
/// Iteration cap for the Karcher mean.
pub const KARCHER_MAX_ITER: usize = 1000;

/// A point on the unit hypersphere: ||entries|| = 1 within `UNIT_NORM_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    /// Wrap a vector that is already unit norm.
    pub fn new(entries: DVector<f64>) -> Result<Self, GeometryError> {
        let norm = entries.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(GeometryError::NotUnit { norm });
        }
        Ok(Self(entries))
    }

    /// Normalize an arbitrary vector onto the sphere. Returns `None` when the
    /// norm is below `UNIT_NORM_TOL`.
    pub fn try_normalize(entries: &DVector<f64>) -> Option<Self> {
        let norm = entries.norm();
        if norm < UNIT_NORM_TOL {
            return None;
        }
        Some(Self(entries / norm))
    }

    pub(crate) fn new_unchecked(entries: DVector<f64>) -> Self {
        debug_assert!((entries.norm() - 1.0).abs() <= 1e-9);
        Self(entries)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.0.dot(&other.0)
    }
}

/// A vector in the tangent space at `base`: orthogonal to the base point and
/// of norm strictly below pi/2 so the exponential map is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: UnitVector,
    entries: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: UnitVector, entries: DVector<f64>) -> Result<Self, GeometryError> {
        let dot = base.as_vector().dot(&entries);
        if dot.abs() > TANGENCY_TOL {
            return Err(GeometryError::NotTangent { dot });
        }
        let norm = entries.norm();
        if norm >= FRAC_PI_2 {
            return Err(GeometryError::NormTooLarge { norm });
        }
        Ok(Self { base, entries })
    }

    /// The zero vector of the tangent space at `base`.
    pub fn zero(base: UnitVector) -> Self {
        let dim = base.dim();
        Self {
            base,
            entries: DVector::zeros(dim),
        }
    }

    pub(crate) fn new_unchecked(base: UnitVector, entries: DVector<f64>) -> Self {
        debug_assert!(base.as_vector().dot(&entries).abs() <= TANGENCY_TOL);
        debug_assert!(entries.norm() < FRAC_PI_2);
        Self { base, entries }
    }

    pub fn base(&self) -> &UnitVector {
        &self.base
    }

    pub fn entries(&self) -> &DVector<f64> {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }
}

/// The template matrix W: unit-norm columns, 1 <= k <= n - 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMatrix {
    columns: DMatrix<f64>,
}

impl TemplateMatrix {
    pub fn new(columns: DMatrix<f64>) -> Result<Self, GeometryError> {
        let (n, k) = columns.shape();
        let max = n.saturating_sub(1);
        if k < 1 || k > max {
            return Err(GeometryError::BadTemplateCount { k, n, max });
        }
        for j in 0..k {
            let norm = columns.column(j).norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(GeometryError::NotUnit { norm });
            }
        }
        Ok(Self { columns })
    }

    pub(crate) fn new_unchecked(columns: DMatrix<f64>) -> Self {
        Self { columns }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Ambient dimension n.
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Number of templates k.
    pub fn column_count(&self) -> usize {
        self.columns.ncols()
    }

    pub fn column(&self, j: usize) -> UnitVector {
        UnitVector::new_unchecked(self.columns.column(j).into_owned())
    }
}

/// Unit-normalized data together with its Karcher mean. Construction through
/// [`normalize_columns`] guarantees that every point lies strictly inside the
/// open half-sphere at the mean and that the mean satisfies the first-order
/// condition of the Karcher objective.
#[derive(Debug, Clone)]
pub struct NormalizedData {
    columns: DMatrix<f64>,
    karcher_mean: UnitVector,
    original: DMatrix<f64>,
    dropped: Vec<usize>,
}

impl NormalizedData {
    /// The unit-normalized points, one per column.
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn karcher_mean(&self) -> &UnitVector {
        &self.karcher_mean
    }

    /// The retained original (unnormalized) columns, aligned with `columns`.
    pub fn original(&self) -> &DMatrix<f64> {
        &self.original
    }

    /// Indices of input columns dropped under [`ZeroColumnPolicy::Drop`].
    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    pub fn point(&self, j: usize) -> UnitVector {
        UnitVector::new_unchecked(self.columns.column(j).into_owned())
    }
}

/// What to do with data columns whose norm is below `UNIT_NORM_TOL`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroColumnPolicy {
    /// Fail with [`GeometryError::ZeroColumn`].
    Error,
    /// Silently drop them, recording the dropped indices.
    Drop,
}

/// Normalize every data column to unit length, compute the Karcher mean and
/// verify that the points lie in the open half-sphere around it.
pub fn normalize_columns(
    x: &DMatrix<f64>,
    policy: ZeroColumnPolicy,
) -> Result<NormalizedData, GeometryError> {
    let (n, m) = x.shape();
    let mut kept = Vec::with_capacity(m);
    let mut dropped = Vec::new();
    for j in 0..m {
        let norm = x.column(j).norm();
        if norm < UNIT_NORM_TOL {
            match policy {
                ZeroColumnPolicy::Error => return Err(GeometryError::ZeroColumn(j)),
                ZeroColumnPolicy::Drop => {
                    dropped.push(j);
                    continue;
                }
            }
        }
        kept.push(j);
    }
    if kept.is_empty() {
        return Err(GeometryError::DegenerateMean);
    }
    let mut columns = DMatrix::zeros(n, kept.len());
    let mut original = DMatrix::zeros(n, kept.len());
    for (out, &j) in kept.iter().enumerate() {
        let col = x.column(j);
        original.set_column(out, &col);
        columns.set_column(out, &(col / col.norm()));
    }
    let mean = karcher_mean(&columns)?;
    for (out, &j) in kept.iter().enumerate() {
        let dot = mean.as_vector().dot(&columns.column(out));
        if dot <= HALF_SPHERE_TOL {
            return Err(GeometryError::HalfSphereViolation { index: j, dot });
        }
    }
    Ok(NormalizedData {
        columns,
        karcher_mean: mean,
        original,
        dropped,
    })
}

/// Exponential map at `base`: cos||v|| base + sin||v|| v/||v||.
///
/// Requires ||v|| < pi/2; below `EXP_ZERO_TOL` it returns the base exactly.
pub fn exp_map(base: &UnitVector, v: &TangentVector) -> Result<UnitVector, GeometryError> {
    if (v.base().as_vector() - base.as_vector()).norm() > UNIT_NORM_TOL {
        return Err(GeometryError::BaseMismatch);
    }
    let norm = v.norm();
    if norm >= FRAC_PI_2 {
        return Err(GeometryError::NormTooLarge { norm });
    }
    Ok(UnitVector::new_unchecked(exp_map_raw(
        base.as_vector(),
        v.entries(),
    )))
}

/// Unchecked kernel of the exponential map. Caller guarantees tangency and
/// ||v|| < pi/2.
pub(crate) fn exp_map_raw(base: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    if norm < EXP_ZERO_TOL {
        return base.clone();
    }
    let mut out = base * norm.cos() + v * (norm.sin() / norm);
    // The analytic result is unit; renormalize away the float drift.
    out /= out.norm();
    out
}

/// Logarithm map at `base`: the tangent vector that the exponential map sends
/// to `w`. Defined for `w` strictly inside the open half-sphere at `base`;
/// at dot > 1 - `LOG_COINCIDENT_TOL` it returns the zero vector (the analytic
/// limit at w = base, where the closed form is 0/0).
pub fn log_map(base: &UnitVector, w: &UnitVector) -> Result<TangentVector, GeometryError> {
    let entries = log_map_raw(base.as_vector(), w.as_vector())?;
    Ok(TangentVector::new_unchecked(base.clone(), entries))
}

pub(crate) fn log_map_raw(
    base: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>, GeometryError> {
    let dot = base.dot(w);
    if dot <= HALF_SPHERE_TOL {
        return Err(GeometryError::OutsideHalfSphere { dot });
    }
    if dot > 1.0 - LOG_COINCIDENT_TOL {
        return Ok(DVector::zeros(base.len()));
    }
    let clamped = dot.clamp(-1.0, 1.0);
    let factor = clamped.acos() / (1.0 - clamped * clamped).sqrt();
    Ok((w - base * dot) * factor)
}

/// Karcher (intrinsic) mean of unit points given as matrix columns.
///
/// Tangent-space averaging: starting from the normalized Euclidean mean,
/// iterate `mean <- exp(mean, avg_j log(mean, x_j))` until the mean tangent
/// norm drops to `KARCHER_TOL`, capped at `KARCHER_MAX_ITER` iterations.
pub fn karcher_mean(points: &DMatrix<f64>) -> Result<UnitVector, GeometryError> {
    let (_, m) = points.shape();
    if m == 0 {
        return Err(GeometryError::DegenerateMean);
    }
    let mut mean: DVector<f64> = points.column_sum() / (m as f64);
    let norm = mean.norm();
    if norm < UNIT_NORM_TOL {
        return Err(GeometryError::DegenerateMean);
    }
    mean /= norm;
    for _ in 0..KARCHER_MAX_ITER {
        let mut tangent = DVector::zeros(points.nrows());
        for j in 0..m {
            tangent += log_map_raw(&mean, &points.column(j).into_owned())?;
        }
        tangent /= m as f64;
        if tangent.norm() <= KARCHER_TOL {
            return Ok(UnitVector::new_unchecked(mean));
        }
        mean = exp_map_raw(&mean, &tangent);
    }
    Err(GeometryError::NoConvergence(KARCHER_MAX_ITER))
}

/// Geodesic distance arccos(u . w), clamped into [-1, 1] before evaluation.
pub fn geodesic_distance(u: &UnitVector, w: &UnitVector) -> f64 {
    u.dot(w).clamp(-1.0, 1.0).acos()
}

/// Geodesic spread S(W): the maximum pairwise geodesic distance between
/// template columns. Zero for k = 1 (maximum over an empty set).
pub fn geodesic_spread(w: &TemplateMatrix) -> f64 {
    spread_of_matrix(w.matrix())
}

pub(crate) fn spread_of_matrix(w: &DMatrix<f64>) -> f64 {
    let k = w.ncols();
    let mut max = 0.0_f64;
    for i in 0..k {
        for j in (i + 1)..k {
            let dot = w.column(i).dot(&w.column(j)).clamp(-1.0, 1.0);
            max = max.max(dot.acos());
        }
    }
    max
}

/// Hyper-area diagnostic A(W): the product of the singular values of W,
/// i.e. sqrt(det(W^T W)) for full-rank W.
pub fn parallelogram_area(w: &TemplateMatrix) -> f64 {
    let svd = w.matrix().clone().svd(false, false);
    svd.singular_values.iter().product()
}
