//! The factorization driver: farthest-point initialization, spread
//! contraction, the full solve for one epsilon, and the Pareto-frontier
//! sweep across epsilon values.

use nalgebra::DMatrix;

use crate::error::TsnmfError;
use crate::geometry::{
    geodesic_spread, normalize_columns, parallelogram_area, spread_of_matrix, NormalizedData,
    TemplateMatrix, ZeroColumnPolicy,
};
use crate::nnls::{nnls_solve_matrix, CoefficientMatrix};
use crate::search::{iterate, IterationRecord, SearchConfig, SearchState, TangentMatrix};

/// Iteration cap for the spread contraction loop.
pub const CONTRACT_MAX_ITER: usize = 5000;
/// Two data columns within this Euclidean distance count as one direction.
pub const DUPLICATE_DIRECTION_TOL: f64 = 1e-12;

/// Output of one factorization run.
#[derive(Debug, Clone)]
pub struct FactorizationResult {
    /// The templates W (n x k, unit columns, spread within epsilon).
    pub templates: TemplateMatrix,
    /// The nonnegative coefficients H (k x m).
    pub coefficients: CoefficientMatrix,
    /// Final squared Frobenius residual ||X - W H||_F^2.
    pub fit: f64,
    /// Residual of the initialization, before any search iteration.
    pub initial_fit: f64,
    /// Geodesic spread S(W) of the final templates.
    pub spread: f64,
    /// Hyper-area diagnostic A(W) of the final templates (not optimized).
    pub area: f64,
    /// One record per search iteration.
    pub trace: Vec<IterationRecord>,
    /// Echo of the configuration that produced this result.
    pub config: SearchConfig,
    /// Input columns dropped during normalization (only under
    /// [`ZeroColumnPolicy::Drop`]).
    pub dropped_columns: Vec<usize>,
}

impl FactorizationResult {
    pub fn template_count(&self) -> usize {
        self.templates.column_count()
    }

    /// Recheck the result invariants against the data it was fitted to:
    /// unit columns, spread within epsilon, nonnegative H, and the stored
    /// fit consistent with a fresh residual evaluation.
    pub fn validate(&self, x: &DMatrix<f64>) -> Result<(), String> {
        let w = self.templates.matrix();
        for j in 0..w.ncols() {
            let norm = w.column(j).norm();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(format!("template {j} has norm {norm}"));
            }
        }
        if self.spread > self.config.epsilon + 1e-12 {
            return Err(format!(
                "spread {} exceeds epsilon {}",
                self.spread, self.config.epsilon
            ));
        }
        if self.coefficients.min_entry() < 0.0 {
            return Err("negative coefficient".to_string());
        }
        let recomputed = (x - w * self.coefficients.entries()).norm_squared();
        if (recomputed - self.fit).abs() > 1e-10 {
            return Err(format!(
                "stored fit {} differs from recomputed {}",
                self.fit, recomputed
            ));
        }
        Ok(())
    }
}

/// One point of the Pareto sweep.
#[derive(Debug, Clone)]
pub struct ParetoPoint {
    pub epsilon: f64,
    pub fit: f64,
    pub result: FactorizationResult,
}

/// A failed sweep member; the sweep carries on past it.
#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub epsilon: f64,
    pub index: usize,
    pub error: TsnmfError,
}

/// Result of [`pareto_sweep`]: successful points sorted by epsilon plus any
/// per-epsilon failures.
#[derive(Debug, Clone)]
pub struct ParetoSweep {
    pub points: Vec<ParetoPoint>,
    pub failures: Vec<SweepFailure>,
}

/// Result of [`contract_to_spread`].
#[derive(Debug, Clone)]
pub struct ContractionOutcome {
    pub tangent: TangentMatrix,
    pub templates: TemplateMatrix,
    /// Spread of the returned templates.
    pub spread: f64,
    /// Number of contractions applied.
    pub contractions: usize,
}

/// Farthest-point initialization: seed with the Karcher mean, then greedily
/// pick the data column maximizing the minimum geodesic distance to
/// everything picked so far. The mean itself is only the seed; the returned
/// matrix holds the k picked columns. Ties break toward the lowest column
/// index.
pub fn farthest_point_init(data: &NormalizedData, k: usize) -> Result<TemplateMatrix, TsnmfError> {
    let (n, m) = data.columns().shape();
    let max_k = n.saturating_sub(1);
    if k < 1 || k > max_k {
        return Err(TsnmfError::InvalidConfig(format!(
            "k = {k} invalid for data dimension {n} (need 1..={max_k})"
        )));
    }
    let distinct = count_distinct_directions(data.columns());
    if distinct < k {
        return Err(TsnmfError::InsufficientData {
            needed: k,
            found: distinct,
        });
    }

    let cols = data.columns();
    // Distance to the nearest already-picked point, seeded by the mean.
    let mean = data.karcher_mean().as_vector();
    let mut min_dist: Vec<f64> = (0..m)
        .map(|j| mean.dot(&cols.column(j)).clamp(-1.0, 1.0).acos())
        .collect();
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = 0usize;
        let mut best_dist = f64::NEG_INFINITY;
        for (j, &dist) in min_dist.iter().enumerate() {
            if dist > best_dist {
                best_dist = dist;
                best = j;
            }
        }
        picked.push(best);
        let picked_col = cols.column(best).into_owned();
        for (j, entry) in min_dist.iter_mut().enumerate() {
            let d = picked_col.dot(&cols.column(j)).clamp(-1.0, 1.0).acos();
            if d < *entry {
                *entry = d;
            }
        }
    }

    let mut w = DMatrix::zeros(n, k);
    for (out, &j) in picked.iter().enumerate() {
        w.set_column(out, &cols.column(j));
    }
    TemplateMatrix::new(w).map_err(TsnmfError::Geometry)
}

fn count_distinct_directions(cols: &DMatrix<f64>) -> usize {
    let m = cols.ncols();
    let mut representatives: Vec<usize> = Vec::new();
    for j in 0..m {
        let dup = representatives
            .iter()
            .any(|&r| (cols.column(j) - cols.column(r)).norm() <= DUPLICATE_DIRECTION_TOL);
        if !dup {
            representatives.push(j);
        }
    }
    representatives.len()
}

/// Shrink the tangent matrix by `factor` until the spread of its exponential
/// drops to `epsilon`. Returns the first feasible pair.
pub fn contract_to_spread(
    v: &TangentMatrix,
    epsilon: f64,
    factor: f64,
) -> Result<ContractionOutcome, TsnmfError> {
    if epsilon <= 0.0 {
        return Err(TsnmfError::InvalidConfig(
            "epsilon must be positive".to_string(),
        ));
    }
    if !(factor > 0.0 && factor < 1.0) {
        return Err(TsnmfError::InvalidConfig(
            "contraction factor must lie in (0, 1)".to_string(),
        ));
    }
    let mut current = v.clone();
    for contractions in 0..=CONTRACT_MAX_ITER {
        let templates = current.exp();
        let spread = spread_of_matrix(templates.matrix());
        if spread <= epsilon {
            return Ok(ContractionOutcome {
                tangent: current,
                templates,
                spread,
                contractions,
            });
        }
        current = current.scale(factor);
    }
    Err(TsnmfError::ContractionStalled(CONTRACT_MAX_ITER))
}

/// Full tSNMF solve for one epsilon, with zero-norm data columns rejected.
pub fn factorize(
    x: &DMatrix<f64>,
    k: usize,
    config: &SearchConfig,
) -> Result<FactorizationResult, TsnmfError> {
    factorize_with_options(x, k, config, ZeroColumnPolicy::Error)
}

/// Full tSNMF solve with an explicit zero-column policy.
pub fn factorize_with_options(
    x: &DMatrix<f64>,
    k: usize,
    config: &SearchConfig,
    policy: ZeroColumnPolicy,
) -> Result<FactorizationResult, TsnmfError> {
    factorize_custom_init(x, k, config, policy, farthest_point_init)
}

/// Factorize with a caller-supplied initialization in place of the
/// farthest-point default. The initializer receives the normalized data and
/// k and must return unit-column templates inside the open half-sphere of
/// the Karcher mean.
pub fn factorize_custom_init<F>(
    x: &DMatrix<f64>,
    k: usize,
    config: &SearchConfig,
    policy: ZeroColumnPolicy,
    init: F,
) -> Result<FactorizationResult, TsnmfError>
where
    F: FnOnce(&NormalizedData, usize) -> Result<TemplateMatrix, TsnmfError>,
{
    config.validate()?;
    let data = normalize_columns(x, policy)?;
    let w0 = init(&data, k)?;
    let v0 = TangentMatrix::from_templates(data.karcher_mean(), &w0)?;
    let contracted = contract_to_spread(&v0, config.epsilon, config.contraction)?;
    let (h0, fit0) = nnls_solve_matrix(&contracted.templates, data.original())?;
    let mut state = SearchState::new(contracted.tangent, contracted.templates, h0, fit0, config);
    let mut trace = Vec::with_capacity(config.i_max);
    for _ in 0..config.i_max {
        trace.push(iterate(&mut state, data.original(), config));
    }
    let spread = geodesic_spread(state.templates());
    let area = parallelogram_area(state.templates());
    let result = FactorizationResult {
        spread,
        area,
        fit: state.fit(),
        initial_fit: fit0,
        trace,
        config: config.clone(),
        dropped_columns: data.dropped().to_vec(),
        coefficients: state.coefficients().clone(),
        templates: state.templates().clone(),
    };
    debug_assert!(result.validate(data.original()).is_ok());
    Ok(result)
}

/// Deterministic per-member seed for sweeps: a splitmix64 mix of the parent
/// seed offset by the golden-ratio stride of the member index.
pub fn child_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One factorization per epsilon, with independent seeds derived from the
/// parent seed and the member index. A failing member is reported in the
/// output without aborting the sweep. Points come back sorted by epsilon.
pub fn pareto_sweep(
    x: &DMatrix<f64>,
    k: usize,
    epsilons: &[f64],
    config: &SearchConfig,
) -> Result<ParetoSweep, TsnmfError> {
    if epsilons.is_empty() {
        return Err(TsnmfError::InvalidConfig(
            "epsilon list must be non-empty".to_string(),
        ));
    }
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (index, &epsilon) in epsilons.iter().enumerate() {
        // A bad member is reported per point; the sweep carries on.
        if !(epsilon > 0.0 && epsilon <= std::f64::consts::PI) {
            failures.push(SweepFailure {
                epsilon,
                index,
                error: TsnmfError::InvalidConfig(format!("epsilon {epsilon} outside (0, pi]")),
            });
            continue;
        }
        let mut member = config.clone();
        member.epsilon = epsilon;
        member.seed = child_seed(config.seed, index);
        match factorize(x, k, &member) {
            Ok(result) => points.push(ParetoPoint {
                epsilon,
                fit: result.fit,
                result,
            }),
            Err(error) => failures.push(SweepFailure {
                epsilon,
                index,
                error,
            }),
        }
    }
    points.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    failures.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    Ok(ParetoSweep { points, failures })
}
