//! Nonnegative least squares by the Lawson-Hanson active-set method.
//!
//! One solve per data column: `min_{h >= 0} ||x - W h||^2`. The active-set
//! loop terminates with an exact KKT point (up to tolerance), which the
//! tests certify directly. Entering-variable ties break toward the lowest
//! index so runs are deterministic across platforms.

use nalgebra::{DMatrix, DVector};

use crate::error::NnlsError;
use crate::geometry::TemplateMatrix;

/// Entering tolerance scale: a coordinate enters the passive set only while
/// its dual value exceeds `DUAL_TOL_SCALE * (1 + ||x||^2)`. Tight enough that
/// the unscaled KKT certificate `g_j >= -1e-8` holds at the problem scales
/// this crate works at.
const DUAL_TOL_SCALE: f64 = 1e-10;
/// A passive coefficient at or below this (scaled by 1 + ||x||) is treated as
/// zero when variables leave the passive set.
const REMOVAL_TOL_SCALE: f64 = 1e-14;
/// Relative singular value cutoff for the passive-set least squares solves.
const LS_CUTOFF: f64 = 1e-12;

/// Nonnegative coefficient matrix H (k x m); every entry is >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(DMatrix<f64>);

impl CoefficientMatrix {
    pub(crate) fn new_unchecked(entries: DMatrix<f64>) -> Self {
        Self(entries)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Number of templates k.
    pub fn template_count(&self) -> usize {
        self.0.nrows()
    }

    /// Number of data columns m.
    pub fn column_count(&self) -> usize {
        self.0.ncols()
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Solve `min_{h >= 0} ||x - W h||^2` for a single column.
pub fn nnls_solve(w: &TemplateMatrix, x: &DVector<f64>) -> Result<DVector<f64>, NnlsError> {
    nnls_solve_raw(w.matrix(), x)
}

pub(crate) fn nnls_solve_raw(
    w: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>, NnlsError> {
    let (n, k) = w.shape();
    if x.len() != n {
        return Err(NnlsError::DimensionMismatch {
            n,
            k,
            rows: x.len(),
        });
    }
    let max_pivots = 3 * k * n;
    let dual_tol = DUAL_TOL_SCALE * (1.0 + x.norm_squared());
    let removal_tol = REMOVAL_TOL_SCALE * (1.0 + x.norm());

    let mut passive = vec![false; k];
    let mut h: DVector<f64> = DVector::zeros(k);
    let mut pivots = 0usize;

    loop {
        // Dual vector (negative gradient) on the current iterate.
        let residual = x - w * &h;
        let dual = w.transpose() * residual;

        // Entering variable: largest dual among active coordinates, lowest
        // index on ties (strict comparison while scanning upward).
        let mut enter: Option<(usize, f64)> = None;
        for j in 0..k {
            if passive[j] {
                continue;
            }
            if dual[j] > dual_tol && enter.is_none_or(|(_, best)| dual[j] > best) {
                enter = Some((j, dual[j]));
            }
        }
        let Some((enter, _)) = enter else {
            break;
        };
        passive[enter] = true;
        pivots += 1;
        if pivots > max_pivots {
            return Err(NnlsError::MaxIterations {
                max_pivots,
                column: None,
            });
        }

        // Inner loop: unconstrained least squares on the passive set; step
        // back toward feasibility while any passive coefficient turns
        // nonpositive.
        loop {
            let z = passive_least_squares(w, x, &passive);
            let mut all_positive = true;
            for j in 0..k {
                if passive[j] && z[j] <= 0.0 {
                    all_positive = false;
                    break;
                }
            }
            if all_positive {
                h = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for j in 0..k {
                if passive[j] && z[j] <= 0.0 {
                    let t = h[j] / (h[j] - z[j]);
                    if t < alpha {
                        alpha = t;
                    }
                }
            }
            h = &h + (&z - &h) * alpha;
            for j in 0..k {
                if passive[j] && (z[j] <= 0.0 && h[j] <= removal_tol) {
                    passive[j] = false;
                    h[j] = 0.0;
                    pivots += 1;
                }
            }
            if pivots > max_pivots {
                return Err(NnlsError::MaxIterations {
                    max_pivots,
                    column: None,
                });
            }
        }
    }
    Ok(h)
}

/// Unconstrained least squares restricted to the passive columns, expanded
/// back to a full-length coefficient vector (zeros on the active set).
fn passive_least_squares(w: &DMatrix<f64>, x: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let k = passive.len();
    let cols: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
    let mut out = DVector::zeros(k);
    if cols.is_empty() {
        return out;
    }
    let mut wp = DMatrix::zeros(w.nrows(), cols.len());
    for (i, &j) in cols.iter().enumerate() {
        wp.set_column(i, &w.column(j));
    }
    let svd = wp.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let z = svd
        .solve(x, LS_CUTOFF * smax)
        .expect("SVD with U and V computed always solves");
    for (i, &j) in cols.iter().enumerate() {
        out[j] = z[i];
    }
    out
}

/// KKT residuals of a candidate solution: the most negative gradient entry
/// (must be >= -1e-8 at a solution) and the largest complementarity product
/// |h_j g_j| (must be <= 1e-8 (1 + ||x||^2)).
pub fn kkt_residuals(w: &TemplateMatrix, x: &DVector<f64>, h: &DVector<f64>) -> (f64, f64) {
    let gradient = w.matrix().transpose() * (w.matrix() * h - x);
    let min_gradient = gradient.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_complementarity = h
        .iter()
        .zip(gradient.iter())
        .map(|(hj, gj)| (hj * gj).abs())
        .fold(0.0_f64, f64::max);
    (min_gradient, max_complementarity)
}

/// Batch NNLS: solve every column of X against W and accumulate the squared
/// Frobenius residual.
pub fn nnls_solve_matrix(
    w: &TemplateMatrix,
    x: &DMatrix<f64>,
) -> Result<(CoefficientMatrix, f64), NnlsError> {
    let (coeffs, fit) = nnls_solve_matrix_raw(w.matrix(), x)?;
    Ok((CoefficientMatrix::new_unchecked(coeffs), fit))
}

pub(crate) fn nnls_solve_matrix_raw(
    w: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64), NnlsError> {
    let (n, k) = w.shape();
    if x.nrows() != n {
        return Err(NnlsError::DimensionMismatch {
            n,
            k,
            rows: x.nrows(),
        });
    }
    let m = x.ncols();
    let mut h = DMatrix::zeros(k, m);
    let mut fit = 0.0;
    for j in 0..m {
        let col = x.column(j).into_owned();
        let hj = nnls_solve_raw(w, &col).map_err(|e| match e {
            NnlsError::MaxIterations { max_pivots, .. } => NnlsError::MaxIterations {
                max_pivots,
                column: Some(j),
            },
            other => other,
        })?;
        fit += (&col - w * &hj).norm_squared();
        h.set_column(j, &hj);
    }
    Ok((h, fit))
}
