//! Probabilistic direct search over the tangent space at the Karcher mean.
//!
//! Each iteration tries, in order: a refit step (least-squares templates from
//! the current coefficients, contracted back into the spread budget), a
//! dilation step, and a paired pair of poll steps built from a random frame
//! of the tangent complement. The first candidate whose fit decrease beats
//! the forcing function is accepted and the step size grows; if every step
//! rejects, the step size shrinks.
//!
//! Randomness discipline: one deterministic generator per run, and every
//! iteration draws its full random budget in a fixed order regardless of
//! which step accepts, so traces are bit-reproducible.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::driver::contract_to_spread;
use crate::error::{GeometryError, SearchError, TsnmfError};
use crate::geometry::{
    exp_map_raw, log_map_raw, spread_of_matrix, TemplateMatrix, UnitVector, TANGENCY_TOL,
};
use crate::nnls::{nnls_solve_matrix_raw, CoefficientMatrix};

/// Columns pushed to or past pi/2 by a step are rescaled to this norm so the
/// exponential map stays defined.
pub const COLUMN_CLAMP: f64 = 0.999 * FRAC_PI_2;
/// Relative singular-value cutoff for the refit pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;
/// Smallest-singular-value threshold for the complement-frame rank check.
pub const RANK_TOL: f64 = 1e-10;

/// Parameters of the direct search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Upper bound on the geodesic spread S(W), in radians.
    pub epsilon: f64,
    /// Number of iterations to run.
    pub i_max: usize,
    /// Seed of the run's generator.
    pub seed: u64,
    /// Maximum step size (default 1).
    pub alpha_max: f64,
    /// Initial step size (default alpha_max).
    pub alpha0: f64,
    /// Step-size decrease factor on full rejection (default 1/2).
    pub theta: f64,
    /// Step-size increase factor on acceptance (default 2).
    pub gamma: f64,
    /// Forcing-function coefficient: a candidate must decrease the fit by
    /// more than `forcing_coeff * alpha^2` (default 1e-3).
    pub forcing_coeff: f64,
    /// Tangent contraction factor used to restore spread feasibility
    /// (default 0.99).
    pub contraction: f64,
}

impl SearchConfig {
    pub fn new(epsilon: f64, i_max: usize, seed: u64) -> Self {
        Self {
            epsilon,
            i_max,
            seed,
            alpha_max: 1.0,
            alpha0: 1.0,
            theta: 0.5,
            gamma: 2.0,
            forcing_coeff: 1e-3,
            contraction: 0.99,
        }
    }

    pub fn validate(&self) -> Result<(), TsnmfError> {
        let bad = |msg: &str| Err(TsnmfError::InvalidConfig(msg.to_string()));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must lie in (0, 1)");
        }
        if self.gamma <= 1.0 {
            return bad("gamma must exceed 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= std::f64::consts::PI) {
            return bad("epsilon must lie in (0, pi]");
        }
        if self.forcing_coeff <= 0.0 {
            return bad("forcing_coeff must be positive");
        }
        if self.alpha_max.is_nan()
            || self.alpha0.is_nan()
            || self.alpha_max <= 0.0
            || self.alpha0 <= 0.0
            || self.alpha0 > self.alpha_max
        {
            return bad("need 0 < alpha0 <= alpha_max");
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return bad("contraction factor must lie in (0, 1)");
        }
        Ok(())
    }

    /// The forcing function rho(alpha).
    pub fn forcing(&self, alpha: f64) -> f64 {
        self.forcing_coeff * alpha * alpha
    }
}

/// Tangent representation of a template matrix: one tangent column per
/// template, all at the same base point, each of norm below pi/2.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMatrix {
    base: UnitVector,
    columns: DMatrix<f64>,
}

impl TangentMatrix {
    pub fn new(base: UnitVector, columns: DMatrix<f64>) -> Result<Self, GeometryError> {
        for j in 0..columns.ncols() {
            let dot = base.as_vector().dot(&columns.column(j));
            if dot.abs() > TANGENCY_TOL {
                return Err(GeometryError::NotTangent { dot });
            }
            let norm = columns.column(j).norm();
            if norm >= FRAC_PI_2 {
                return Err(GeometryError::NormTooLarge { norm });
            }
        }
        Ok(Self { base, columns })
    }

    pub(crate) fn new_unchecked(base: UnitVector, columns: DMatrix<f64>) -> Self {
        Self { base, columns }
    }

    /// Logarithm map of every template column at `base`.
    pub fn from_templates(base: &UnitVector, w: &TemplateMatrix) -> Result<Self, GeometryError> {
        let (n, k) = w.matrix().shape();
        let mut columns = DMatrix::zeros(n, k);
        for j in 0..k {
            let t = log_map_raw(base.as_vector(), &w.matrix().column(j).into_owned())?;
            columns.set_column(j, &t);
        }
        Ok(Self {
            base: base.clone(),
            columns,
        })
    }

    /// Exponential map of every column; the template counterpart.
    pub fn exp(&self) -> TemplateMatrix {
        TemplateMatrix::new_unchecked(exp_columns(&self.base, &self.columns))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            base: self.base.clone(),
            columns: &self.columns * factor,
        }
    }

    pub fn base(&self) -> &UnitVector {
        &self.base
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column_count(&self) -> usize {
        self.columns.ncols()
    }

    /// Largest |base . column| over the columns; zero for exact tangency.
    pub fn max_tangency_defect(&self) -> f64 {
        (0..self.columns.ncols())
            .map(|j| self.base.as_vector().dot(&self.columns.column(j)).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn exp_columns(base: &UnitVector, v: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = v.shape();
    let mut out = DMatrix::zeros(n, k);
    for j in 0..k {
        out.set_column(j, &exp_map_raw(base.as_vector(), &v.column(j).into_owned()));
    }
    out
}

/// Why a step did not produce an acceptable candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// The fit decrease did not beat the forcing function.
    InsufficientDecrease,
    /// The candidate's spread exceeds epsilon (checked before any NNLS solve).
    SpreadViolation,
    /// A refit column collapsed to (numerically) zero norm.
    ColumnCollapse,
    /// A refit column left the open half-sphere of the base point.
    OutsideHalfSphere,
    /// The pseudo-inverse of the coefficient matrix could not be computed.
    PseudoInverseFailure,
    /// The tangent complement is empty (p = 0), so no poll direction exists.
    FrameUnavailable,
    /// Contraction could not restore spread feasibility within its cap.
    ContractionStalled,
    /// The candidate's NNLS solve failed (numerical degeneracy).
    NnlsFailure,
}

/// An accepted trial point.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub tangent: TangentMatrix,
    pub templates: TemplateMatrix,
    pub coefficients: CoefficientMatrix,
    pub fit: f64,
    pub spread: f64,
}

pub type StepOutcome = Result<Candidate, RejectReason>;

/// Which of the paired poll steps to take: `Plus` adds the frame term,
/// `Minus` subtracts it, with the same random draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PollSign {
    Plus,
    Minus,
}

/// Random numbers consumed by the dilation step.
#[derive(Debug, Clone)]
pub struct DilationDraws {
    /// Diagonal offsets, each in [0, alpha].
    pub d: Vec<f64>,
    /// Haar-distributed k x k orthogonal matrix.
    pub q: DMatrix<f64>,
}

/// Random numbers and the complement frame consumed by the poll steps. Both
/// poll signs reuse the same draws.
#[derive(Debug, Clone)]
pub struct PollDraws {
    /// Frame scales, each in [0, alpha].
    pub c: Vec<f64>,
    /// Diagonal offsets, each in [0, alpha].
    pub d: Vec<f64>,
    pub q: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// Orthonormal frame of the tangent complement of the current templates
    /// (n x p). May have zero columns.
    pub frame: DMatrix<f64>,
    /// p x k factor with orthonormal columns (p >= k) or orthonormal rows
    /// (p < k); `None` when p = 0.
    pub z: Option<DMatrix<f64>>,
}

/// Full per-iteration random budget.
#[derive(Debug, Clone)]
pub struct IterationDraws {
    pub dilation: DilationDraws,
    pub poll: PollDraws,
}

/// Which step an iteration accepted, or `Reject` when all steps failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepTag {
    Refit,
    Dilation,
    PollPlus,
    PollMinus,
    Reject,
}

impl StepTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepTag::Refit => "refit",
            StepTag::Dilation => "dilation",
            StepTag::PollPlus => "poll+",
            StepTag::PollMinus => "poll-",
            StepTag::Reject => "reject",
        }
    }
}

/// One trace record per iteration: the counter, the accepted step (or
/// reject), and the post-update step size, fit and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub i: usize,
    pub step: StepTag,
    pub alpha: f64,
    pub fit: f64,
    pub spread: f64,
    /// Rejection reasons of the steps tried this iteration, in order.
    pub rejections: Vec<RejectReason>,
}

/// Mutable state of one search run.
#[derive(Debug, Clone)]
pub struct SearchState {
    iteration: usize,
    alpha: f64,
    tangent: TangentMatrix,
    templates: TemplateMatrix,
    coefficients: CoefficientMatrix,
    fit: f64,
    rng: ChaCha8Rng,
    /// Number of batch NNLS evaluations performed so far (diagnostic).
    pub nnls_evaluations: u64,
}

impl SearchState {
    pub fn new(
        tangent: TangentMatrix,
        templates: TemplateMatrix,
        coefficients: CoefficientMatrix,
        fit: f64,
        config: &SearchConfig,
    ) -> Self {
        Self {
            iteration: 0,
            alpha: config.alpha0,
            tangent,
            templates,
            coefficients,
            fit,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            nnls_evaluations: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tangent(&self) -> &TangentMatrix {
        &self.tangent
    }

    pub fn templates(&self) -> &TemplateMatrix {
        &self.templates
    }

    pub fn coefficients(&self) -> &CoefficientMatrix {
        &self.coefficients
    }

    pub fn fit(&self) -> f64 {
        self.fit
    }

    /// Draw the full random budget of one iteration.
    ///
    /// Fixed order, independent of which step later accepts:
    /// 1. dilation offsets d (k uniforms scaled by alpha),
    /// 2. dilation Q (k^2 standard normals, column-major, then QR),
    /// 3. poll scales c (k uniforms scaled by alpha),
    /// 4. poll offsets d (k uniforms scaled by alpha),
    /// 5. poll Q, then poll U (k^2 normals each, column-major, then QR),
    /// 6. poll Z against the complement dimension p: p x k normals when
    ///    p >= k, k x p normals transposed when 0 < p < k, nothing when p = 0.
    ///
    /// The complement frame itself is deterministic given the current tangent
    /// matrix and consumes no randomness.
    pub fn draw_iteration(&mut self) -> IterationDraws {
        let k = self.tangent.column_count();
        let alpha = self.alpha;
        let dilation = DilationDraws {
            d: draw_uniform_scaled(&mut self.rng, k, alpha),
            q: random_orthogonal(k, &mut self.rng),
        };
        let frame = match complement_basis(self.tangent.base(), &self.tangent) {
            Ok(frame) => frame,
            // Dependent tangent columns: fall back to the complement of the
            // frame actually spanned.
            Err(SearchError::RankDeficient { .. }) => {
                rank_tolerant_complement(self.tangent.base().as_vector(), self.tangent.columns())
            }
        };
        let c = draw_uniform_scaled(&mut self.rng, k, alpha);
        let d = draw_uniform_scaled(&mut self.rng, k, alpha);
        let q = random_orthogonal(k, &mut self.rng);
        let u = random_orthogonal(k, &mut self.rng);
        let z = draw_z(frame.ncols(), k, &mut self.rng);
        IterationDraws {
            dilation,
            poll: PollDraws {
                c,
                d,
                q,
                u,
                frame,
                z,
            },
        }
    }
}

fn draw_uniform_scaled(rng: &mut ChaCha8Rng, k: usize, alpha: f64) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>() * alpha).collect()
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)),
    )
}

/// Haar-uniform random orthogonal matrix: QR of a Gaussian matrix with the
/// signs of the triangular factor's diagonal fixed to be positive.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    haar_frame(dim, dim, rng)
}

/// Haar-uniform n x p matrix with orthonormal columns (requires p <= n).
fn haar_frame(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    debug_assert!(cols <= rows);
    let qr = gaussian_matrix(rows, cols, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

fn draw_z(p: usize, k: usize, rng: &mut impl Rng) -> Option<DMatrix<f64>> {
    if p == 0 {
        None
    } else if p >= k {
        Some(haar_frame(p, k, rng))
    } else {
        // Fewer complement directions than templates: orthonormal rows.
        Some(haar_frame(k, p, rng).transpose())
    }
}

/// Orthonormal basis of the orthogonal complement of span{base, v_1..v_k}.
///
/// The returned frame has p = n - 1 - rank(V) columns; under the full-rank
/// precondition this is n - 1 - k. The frame excludes the base direction so
/// poll terms built from it stay in the tangent space.
pub fn complement_basis(base: &UnitVector, v: &TangentMatrix) -> Result<DMatrix<f64>, SearchError> {
    let k = v.column_count();
    let n = base.dim();
    let mut normed = v.columns().clone();
    for j in 0..k {
        let norm = normed.column(j).norm();
        if norm < 1e-300 {
            return Err(SearchError::RankDeficient { smallest: 0.0 });
        }
        let col = normed.column(j) / norm;
        normed.set_column(j, &col);
    }
    let smallest = normed
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smallest <= RANK_TOL {
        return Err(SearchError::RankDeficient { smallest });
    }
    let mut m = DMatrix::zeros(n, k + 1);
    m.set_column(0, base.as_vector());
    for j in 0..k {
        m.set_column(j + 1, &v.columns().column(j));
    }
    Ok(householder_complement(&m))
}

/// Complement of the span actually generated by [base | V], dropping
/// dependent columns first. Used as the fallback when `complement_basis`
/// reports rank deficiency.
pub(crate) fn rank_tolerant_complement(base: &DVector<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = base.len();
    let mut kept: Vec<DVector<f64>> = vec![base.clone()];
    for j in 0..v.ncols() {
        let col = v.column(j).into_owned();
        let cnorm = col.norm();
        if cnorm < 1e-300 {
            continue;
        }
        let mut r = col;
        // Two Gram-Schmidt passes for orthogonality at working precision.
        for _ in 0..2 {
            for b in &kept {
                let d = b.dot(&r);
                r -= b * d;
            }
        }
        let rnorm = r.norm();
        if rnorm > RANK_TOL * cnorm {
            kept.push(r / rnorm);
        }
    }
    let c = kept.len();
    let mut m = DMatrix::zeros(n, c);
    for (j, b) in kept.iter().enumerate() {
        m.set_column(j, b);
    }
    householder_complement(&m)
}

/// Trailing n - c columns of the full Q factor of an n x c full-column-rank
/// matrix: an orthonormal basis of the complement of its column span.
fn householder_complement(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, c) = m.shape();
    debug_assert!(c <= n);
    let mut r = m.clone();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(c);
    for j in 0..c {
        let len = n - j;
        let mut v = DVector::zeros(len);
        for i in 0..len {
            v[i] = r[(j + i, j)];
        }
        let norm = v.norm();
        if norm > 0.0 {
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vnorm = v.norm();
            if vnorm > 1e-300 {
                v /= vnorm;
                for col in j..c {
                    let mut dot = 0.0;
                    for i in 0..len {
                        dot += v[i] * r[(j + i, col)];
                    }
                    for i in 0..len {
                        r[(j + i, col)] -= 2.0 * dot * v[i];
                    }
                }
            } else {
                v.fill(0.0);
            }
        }
        reflectors.push(v);
    }
    let p = n - c;
    let mut out = DMatrix::zeros(n, p);
    for (idx, col) in (c..n).enumerate() {
        let mut q = DVector::zeros(n);
        q[col] = 1.0;
        for j in (0..c).rev() {
            let v = &reflectors[j];
            let mut dot = 0.0;
            for i in 0..v.len() {
                dot += v[i] * q[j + i];
            }
            if dot != 0.0 {
                for i in 0..v.len() {
                    q[j + i] -= 2.0 * dot * v[i];
                }
            }
        }
        out.set_column(idx, &q);
    }
    out
}

fn clamp_columns(mut v: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..v.ncols() {
        let norm = v.column(j).norm();
        if norm >= FRAC_PI_2 {
            let col = v.column(j) * (COLUMN_CLAMP / norm);
            v.set_column(j, &col);
        }
    }
    v
}

/// Gate a raw tangent candidate on the spread bound, then evaluate NNLS and
/// the sufficient-decrease condition.
fn evaluate_tangent_candidate(
    state: &mut SearchState,
    x: &DMatrix<f64>,
    config: &SearchConfig,
    v_raw: DMatrix<f64>,
) -> StepOutcome {
    let v = clamp_columns(v_raw);
    let w = exp_columns(state.tangent.base(), &v);
    let spread = spread_of_matrix(&w);
    if spread > config.epsilon {
        return Err(RejectReason::SpreadViolation);
    }
    state.nnls_evaluations += 1;
    let Ok((h, fit)) = nnls_solve_matrix_raw(&w, x) else {
        return Err(RejectReason::NnlsFailure);
    };
    if state.fit - fit > config.forcing(state.alpha) {
        let base = state.tangent.base().clone();
        Ok(Candidate {
            tangent: TangentMatrix::new_unchecked(base, v),
            templates: TemplateMatrix::new_unchecked(w),
            coefficients: CoefficientMatrix::new_unchecked(h),
            fit,
            spread,
        })
    } else {
        Err(RejectReason::InsufficientDecrease)
    }
}

/// Refit step: templates from the least-squares solution X H^+ (columns
/// normalized), mapped to the tangent space and contracted into the spread
/// budget, then re-coefficiented by NNLS.
pub fn search_step_refit(
    state: &mut SearchState,
    x: &DMatrix<f64>,
    config: &SearchConfig,
) -> StepOutcome {
    let svd = state.coefficients.entries().clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let h_pinv = svd
        .pseudo_inverse(PINV_CUTOFF * smax)
        .map_err(|_| RejectReason::PseudoInverseFailure)?;
    let mut w = x * h_pinv;
    let (n, k) = w.shape();
    for j in 0..k {
        let norm = w.column(j).norm();
        if norm < 1e-12 {
            return Err(RejectReason::ColumnCollapse);
        }
        let col = w.column(j) / norm;
        w.set_column(j, &col);
    }
    let base = state.tangent.base().clone();
    let mut v = DMatrix::zeros(n, k);
    for j in 0..k {
        let t = log_map_raw(base.as_vector(), &w.column(j).into_owned())
            .map_err(|_| RejectReason::OutsideHalfSphere)?;
        v.set_column(j, &t);
    }
    let tangent = TangentMatrix::new_unchecked(base, v);
    let contracted = contract_to_spread(&tangent, config.epsilon, config.contraction)
        .map_err(|_| RejectReason::ContractionStalled)?;
    state.nnls_evaluations += 1;
    let Ok((h, fit)) = nnls_solve_matrix_raw(contracted.templates.matrix(), x) else {
        return Err(RejectReason::NnlsFailure);
    };
    if state.fit - fit > config.forcing(state.alpha) {
        Ok(Candidate {
            tangent: contracted.tangent,
            templates: contracted.templates,
            coefficients: CoefficientMatrix::new_unchecked(h),
            fit,
            spread: contracted.spread,
        })
    } else {
        Err(RejectReason::InsufficientDecrease)
    }
}

/// Dilation step: V' = V Q (I + diag(d)) Q^T with column norms clamped
/// below pi/2.
pub fn search_step_dilation(
    state: &mut SearchState,
    x: &DMatrix<f64>,
    config: &SearchConfig,
    draws: &DilationDraws,
) -> StepOutcome {
    let mix = mixing_matrix(&draws.q, &draws.d);
    let v_raw = state.tangent.columns() * mix;
    evaluate_tangent_candidate(state, x, config, v_raw)
}

/// Poll step: V' = V Q (I + diag(d)) Q^T +/- A Z diag(c) U^T. Both signs use
/// the same draws; this is the paired polling of the engine.
pub fn poll_step(
    state: &mut SearchState,
    x: &DMatrix<f64>,
    config: &SearchConfig,
    sign: PollSign,
    draws: &PollDraws,
) -> StepOutcome {
    if draws.frame.ncols() == 0 {
        return Err(RejectReason::FrameUnavailable);
    }
    let z = draws
        .z
        .as_ref()
        .expect("poll draws carry Z whenever the frame is nonempty");
    let mix = mixing_matrix(&draws.q, &draws.d);
    let c_diag = DMatrix::from_diagonal(&DVector::from_row_slice(&draws.c));
    let frame_term = &draws.frame * z * c_diag * draws.u.transpose();
    let dilated = state.tangent.columns() * mix;
    let v_raw = match sign {
        PollSign::Plus => dilated + frame_term,
        PollSign::Minus => dilated - frame_term,
    };
    evaluate_tangent_candidate(state, x, config, v_raw)
}

/// Q (I + diag(d)) Q^T.
fn mixing_matrix(q: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let k = d.len();
    let diag = DVector::from_iterator(k, d.iter().map(|di| 1.0 + di));
    q * DMatrix::from_diagonal(&diag) * q.transpose()
}

/// One full iteration: refit, dilation, poll+, poll- in order, stopping at
/// the first acceptance. On acceptance the step size grows by gamma (capped
/// at alpha_max); when every step rejects the state is kept and the step
/// size shrinks by theta. The iteration counter always advances by one.
pub fn iterate(
    state: &mut SearchState,
    x: &DMatrix<f64>,
    config: &SearchConfig,
) -> IterationRecord {
    let draws = state.draw_iteration();
    let mut rejections = Vec::new();
    let mut accepted: Option<(StepTag, Candidate)> = None;

    match search_step_refit(state, x, config) {
        Ok(c) => accepted = Some((StepTag::Refit, c)),
        Err(r) => rejections.push(r),
    }
    if accepted.is_none() {
        match search_step_dilation(state, x, config, &draws.dilation) {
            Ok(c) => accepted = Some((StepTag::Dilation, c)),
            Err(r) => rejections.push(r),
        }
    }
    if accepted.is_none() {
        match poll_step(state, x, config, PollSign::Plus, &draws.poll) {
            Ok(c) => accepted = Some((StepTag::PollPlus, c)),
            Err(r) => rejections.push(r),
        }
    }
    if accepted.is_none() {
        match poll_step(state, x, config, PollSign::Minus, &draws.poll) {
            Ok(c) => accepted = Some((StepTag::PollMinus, c)),
            Err(r) => rejections.push(r),
        }
    }

    let step = match accepted {
        Some((tag, candidate)) => {
            state.alpha = config.alpha_max.min(config.gamma * state.alpha);
            state.tangent = candidate.tangent;
            state.templates = candidate.templates;
            state.coefficients = candidate.coefficients;
            state.fit = candidate.fit;
            tag
        }
        None => {
            state.alpha *= config.theta;
            StepTag::Reject
        }
    };
    state.iteration += 1;
    IterationRecord {
        i: state.iteration,
        step,
        alpha: state.alpha,
        fit: state.fit,
        spread: spread_of_matrix(state.templates.matrix()),
        rejections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{normalize_columns, ZeroColumnPolicy};
    use crate::nnls::nnls_solve_matrix;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize, n: usize) -> UnitVector {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        UnitVector::new(v).unwrap()
    }

    /// Build a ready-to-iterate state from raw data and templates chosen as
    /// normalized data columns.
    fn state_from_data(
        x: &DMatrix<f64>,
        template_cols: &[usize],
        config: &SearchConfig,
    ) -> SearchState {
        let data = normalize_columns(x, ZeroColumnPolicy::Error).unwrap();
        let k = template_cols.len();
        let mut w = DMatrix::zeros(x.nrows(), k);
        for (j, &c) in template_cols.iter().enumerate() {
            w.set_column(j, &data.columns().column(c));
        }
        let w = TemplateMatrix::new(w).unwrap();
        let tangent = TangentMatrix::from_templates(data.karcher_mean(), &w).unwrap();
        let (h, fit) = nnls_solve_matrix(&w, x).unwrap();
        SearchState::new(tangent, w, h, fit, config)
    }

    fn cone_instance(seed: u64, n: usize, m: usize, width: f64) -> DMatrix<f64> {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = {
            let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = g.norm();
            g / norm
        };
        let u = {
            let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let proj = &g - &c * c.dot(&g);
            let norm = proj.norm();
            proj / norm
        };
        DMatrix::from_fn(n, m, |i, j| {
            let phi = width * (j as f64) / (m as f64 - 1.0);
            let r = 0.5 + 1.5 * ((j * 31 + 7) % 10) as f64 / 10.0;
            let _ = i;
            r * (phi.cos() * c[i] + phi.sin() * u[i])
        })
    }

    /// Full-dimensional cloud around a random center; tangent vectors of
    /// distinct data columns are generically independent.
    fn blob_instance(seed: u64, n: usize, m: usize, radius: f64) -> DMatrix<f64> {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = {
            let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = g.norm();
            g / norm
        };
        let mut x = DMatrix::zeros(n, m);
        for j in 0..m {
            let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let proj = &g - &c * c.dot(&g);
            let t = &proj * ((0.2 + 0.8 * rng.random::<f64>()) * radius / proj.norm());
            let scale = 0.5 + 1.5 * rng.random::<f64>();
            let tnorm = t.norm();
            let point = (&c * tnorm.cos() + &t * (tnorm.sin() / tnorm)) * scale;
            x.set_column(j, &point);
        }
        x
    }

    #[test]
    fn random_orthogonal_dim_one_is_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = random_orthogonal(1, &mut rng);
            assert!((q[(0, 0)].abs() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for dim in [2usize, 3, 5, 8] {
            let q = random_orthogonal(dim, &mut rng);
            let gram = q.transpose() * &q;
            let err = (&gram - DMatrix::identity(dim, dim)).abs().max();
            assert!(err <= 1e-12, "dim {dim}: orthogonality defect {err}");
        }
    }

    #[test]
    fn complement_of_single_tangent_in_r3() {
        let base = e(0, 3);
        let mut v = DMatrix::zeros(3, 1);
        v[(1, 0)] = 0.4;
        let v = TangentMatrix::new(base.clone(), v).unwrap();
        let a = complement_basis(&base, &v).unwrap();
        assert_eq!(a.shape(), (3, 1));
        assert_abs_diff_eq!(a.column(0)[2].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn complement_of_two_tangents_in_r4() {
        let base = e(0, 4);
        let mut v = DMatrix::zeros(4, 2);
        v[(1, 0)] = 0.3;
        v[(2, 1)] = 0.7;
        let v = TangentMatrix::new(base.clone(), v).unwrap();
        let a = complement_basis(&base, &v).unwrap();
        assert_eq!(a.shape(), (4, 1));
        assert_abs_diff_eq!(a.column(0)[3].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn complement_orthogonality_on_random_instances() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let n = 9;
            let k = 3;
            let base = {
                let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = g.norm();
                UnitVector::new(g / norm).unwrap()
            };
            let mut v = DMatrix::zeros(n, k);
            for j in 0..k {
                let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let proj = &g - base.as_vector() * base.as_vector().dot(&g);
                let col = &proj * (0.8 * rng.random::<f64>() / proj.norm());
                v.set_column(j, &col);
            }
            let v = TangentMatrix::new(base.clone(), v).unwrap();
            let a = complement_basis(&base, &v).unwrap();
            assert_eq!(a.ncols(), n - 1 - k);
            let gram_err = (a.transpose() * &a - DMatrix::identity(a.ncols(), a.ncols()))
                .abs()
                .max();
            assert!(gram_err <= 1e-12);
            assert!((a.transpose() * base.as_vector()).abs().max() <= 1e-12);
            assert!((a.transpose() * v.columns()).abs().max() <= 1e-10);
        }
    }

    #[test]
    fn complement_rejects_dependent_columns() {
        let base = e(0, 4);
        let mut v = DMatrix::zeros(4, 2);
        v[(1, 0)] = 0.3;
        v[(1, 1)] = 0.6;
        let v = TangentMatrix::new(base.clone(), v).unwrap();
        assert!(matches!(
            complement_basis(&base, &v).unwrap_err(),
            SearchError::RankDeficient { .. }
        ));
        // The fallback still produces a frame orthogonal to the span.
        let a = rank_tolerant_complement(base.as_vector(), v.columns());
        assert_eq!(a.ncols(), 2);
        assert!((a.transpose() * v.columns()).abs().max() <= 1e-10);
    }

    #[test]
    fn refit_on_optimal_state_rejects_with_insufficient_decrease() {
        // Data columns equal to the templates: fit is already (numerically)
        // zero, so no candidate can strictly decrease it.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let config = SearchConfig::new(2.0, 10, 5);
        let mut state = state_from_data(&x, &[0, 1], &config);
        assert!(state.fit() <= 1e-20);
        let out = search_step_refit(&mut state, &x, &config);
        assert_eq!(out.unwrap_err(), RejectReason::InsufficientDecrease);
    }

    #[test]
    fn refit_with_zero_coefficient_row_does_not_panic() {
        let x = cone_instance(8, 4, 10, 0.8);
        let config = SearchConfig::new(2.0, 10, 5);
        let mut state = state_from_data(&x, &[0, 9], &config);
        // Force a zero row: the second template becomes unused.
        let mut h = state.coefficients().entries().clone();
        for j in 0..h.ncols() {
            h[(1, j)] = 0.0;
        }
        state.coefficients = CoefficientMatrix::new_unchecked(h);
        let out = search_step_refit(&mut state, &x, &config);
        // Either a clean candidate or a clean rejection; never a crash.
        if let Err(r) = out {
            assert!(matches!(
                r,
                RejectReason::InsufficientDecrease
                    | RejectReason::ColumnCollapse
                    | RejectReason::OutsideHalfSphere
            ));
        }
    }

    #[test]
    fn dilation_with_zero_offsets_rejects() {
        let x = cone_instance(9, 4, 12, 0.9);
        let config = SearchConfig::new(2.0, 10, 5);
        let mut state = state_from_data(&x, &[0, 11], &config);
        let draws = DilationDraws {
            d: vec![0.0, 0.0],
            q: DMatrix::identity(2, 2),
        };
        let out = search_step_dilation(&mut state, &x, &config, &draws);
        assert_eq!(out.unwrap_err(), RejectReason::InsufficientDecrease);
    }

    #[test]
    fn dilation_spread_violation_skips_nnls() {
        let x = cone_instance(10, 4, 12, 1.2);
        // Spread bound barely above the initial spread: any real dilation
        // pushes the candidate outside.
        let mut probe = state_from_data(&x, &[0, 11], &SearchConfig::new(2.0, 10, 5));
        let spread0 = spread_of_matrix(probe.templates().matrix());
        let config = SearchConfig::new(spread0 + 1e-6, 10, 5);
        let draws = DilationDraws {
            d: vec![0.9, 0.9],
            q: DMatrix::identity(2, 2),
        };
        let before = probe.nnls_evaluations;
        let out = search_step_dilation(&mut probe, &x, &config, &draws);
        assert_eq!(out.unwrap_err(), RejectReason::SpreadViolation);
        assert_eq!(probe.nnls_evaluations, before);
    }

    #[test]
    fn poll_with_zero_draws_rejects() {
        let x = blob_instance(11, 5, 12, 0.9);
        let config = SearchConfig::new(2.0, 10, 5);
        let mut state = state_from_data(&x, &[0, 11], &config);
        let frame = complement_basis(state.tangent().base(), state.tangent()).unwrap();
        let p = frame.ncols();
        let z = draw_z(p, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let draws = PollDraws {
            c: vec![0.0, 0.0],
            d: vec![0.0, 0.0],
            q: DMatrix::identity(2, 2),
            u: DMatrix::identity(2, 2),
            frame,
            z,
        };
        let out = poll_step(&mut state, &x, &config, PollSign::Plus, &draws);
        assert_eq!(out.unwrap_err(), RejectReason::InsufficientDecrease);
    }

    #[test]
    fn poll_frame_unavailable_when_complement_is_empty() {
        // n = k + 1 with full-rank V: p = n - 1 - k = 0.
        let x = blob_instance(12, 3, 10, 0.8);
        let config = SearchConfig::new(2.0, 10, 5);
        let mut state = state_from_data(&x, &[0, 9], &config);
        let draws = state.draw_iteration();
        assert_eq!(draws.poll.frame.ncols(), 0);
        assert!(draws.poll.z.is_none());
        let out = poll_step(&mut state, &x, &config, PollSign::Plus, &draws.poll);
        assert_eq!(out.unwrap_err(), RejectReason::FrameUnavailable);
    }

    #[test]
    fn full_rejection_run_halves_alpha_exactly() {
        // All data columns equal: fit starts at ~0 and nothing can beat the
        // forcing function, so every iteration rejects.
        let mut x = DMatrix::zeros(3, 4);
        for j in 0..4 {
            x[(0, j)] = 2.0;
            x[(1, j)] = 1.0;
        }
        let config = SearchConfig::new(1.0, 10, 42);
        let mut state = state_from_data(&x, &[0], &config);
        for j in 1..=10usize {
            let record = iterate(&mut state, &x, &config);
            assert_eq!(record.step, StepTag::Reject);
            assert_eq!(record.alpha, config.alpha0 * config.theta.powi(j as i32));
        }
        assert_eq!(state.iteration(), 10);
    }

    #[test]
    fn iterate_is_monotone_and_feasible_on_seeded_run() {
        let x = cone_instance(13, 6, 30, 1.1);
        let config = SearchConfig::new(0.9, 60, 99);
        let state = state_from_data(&x, &[0, 29], &config);
        // Contract into the budget first (the driver normally does this).
        let contracted =
            contract_to_spread(state.tangent(), config.epsilon, config.contraction).unwrap();
        let (h, fit) = nnls_solve_matrix(&contracted.templates, &x).unwrap();
        let mut state = SearchState::new(contracted.tangent, contracted.templates, h, fit, &config);
        let mut prev_fit = state.fit();
        let mut accepted = 0;
        for _ in 0..config.i_max {
            let record = iterate(&mut state, &x, &config);
            assert!(record.fit <= prev_fit + 0.0);
            assert!(record.spread <= config.epsilon + 1e-12);
            assert!(state.tangent().max_tangency_defect() <= 1e-10);
            for j in 0..state.templates().column_count() {
                assert!((state.templates().matrix().column(j).norm() - 1.0).abs() <= 1e-12);
            }
            if record.step != StepTag::Reject {
                accepted += 1;
            }
            prev_fit = record.fit;
        }
        assert!(accepted > 0, "search never accepted a candidate");
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let x = cone_instance(14, 5, 20, 1.0);
        let config = SearchConfig::new(1.2, 25, 7);
        let run = |cfg: &SearchConfig| {
            let mut state = state_from_data(&x, &[0, 19], cfg);
            (0..cfg.i_max)
                .map(|_| iterate(&mut state, &x, cfg))
                .collect::<Vec<_>>()
        };
        let a = run(&config);
        let b = run(&config);
        assert_eq!(a, b);
    }

    #[test]
    fn refit_improves_a_misfit_state_in_one_step() {
        // Templates picked from the middle of the arc leave the arc ends
        // poorly represented; one refit step must beat the forcing function.
        let x = cone_instance(15, 6, 24, 1.3);
        let config = SearchConfig::new(1.4, 10, 5);
        let mut state = state_from_data(&x, &[10, 13], &config);
        let before = state.fit();
        assert!(before > 1e-2);
        let candidate = search_step_refit(&mut state, &x, &config).unwrap();
        assert!(candidate.fit < before - config.forcing(state.alpha()));
        assert!(candidate.spread <= config.epsilon);
    }

    #[test]
    fn haar_rotation_angle_is_uniform() {
        // First column of a Haar O(2) sample is uniform on the circle; a
        // 16-bin chi-square test at significance 0.01 (15 degrees of
        // freedom, critical value 30.58) accepts uniformity.
        let mut rng = ChaCha8Rng::seed_from_u64(271828);
        let samples = 10_000usize;
        let bins = 16usize;
        let mut counts = vec![0usize; bins];
        for _ in 0..samples {
            let q = random_orthogonal(2, &mut rng);
            let angle = q[(1, 0)].atan2(q[(0, 0)]); // in (-pi, pi]
            let unit = (angle + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
            let bin = ((unit * bins as f64) as usize).min(bins - 1);
            counts[bin] += 1;
        }
        let expected = samples as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 30.58, "chi-square statistic {chi2} rejects uniformity");
    }
}
