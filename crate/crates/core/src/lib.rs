//! Tight semi-nonnegative matrix factorization (tSNMF).
//!
//! Approximates a data matrix `X` by `W H` where `H` is nonnegative, the
//! columns of `W` are unit vectors, and the maximum pairwise geodesic angle
//! between those columns is bounded by a tightness parameter `epsilon`.
//! Templates therefore span a cone just wide enough for the data: the
//! factorization models the data and as little else as possible. Different
//! epsilons trace the Pareto frontier between model fidelity and tightness.
//!
//! The solver works on the unit hypersphere: data columns are normalized,
//! their Karcher mean is found, and the templates are optimized through a
//! probabilistic direct search over the tangent space at that mean, with a
//! nonnegative least squares solve producing the coefficients for every
//! candidate template set.
//!
//! ```
//! use nalgebra::DMatrix;
//! use tsnmf::{factorize, SearchConfig};
//!
//! // Points spread along an arc in the plane.
//! let x = DMatrix::from_fn(3, 8, |i, j| {
//!     let phi = 0.9 * (j as f64) / 7.0;
//!     [phi.cos(), phi.sin(), 0.0][i] * (1.0 + j as f64 * 0.2)
//! });
//! let config = SearchConfig::new(1.0, 50, 7);
//! let result = factorize(&x, 2, &config).unwrap();
//! assert!(result.fit <= result.initial_fit);
//! assert!(result.spread <= 1.0 + 1e-12);
//! ```

pub mod cli;
pub mod data;
pub mod driver;
pub mod error;
pub mod geometry;
pub mod io;
pub mod nnls;
pub mod search;

pub use driver::{
    child_seed, contract_to_spread, factorize, factorize_custom_init, factorize_with_options,
    farthest_point_init, pareto_sweep, ContractionOutcome, FactorizationResult, ParetoPoint,
    ParetoSweep, SweepFailure,
};
pub use error::{DataError, GeometryError, NnlsError, SearchError, TsnmfError};
pub use geometry::{
    exp_map, geodesic_distance, geodesic_spread, karcher_mean, log_map, normalize_columns,
    parallelogram_area, NormalizedData, TangentVector, TemplateMatrix, UnitVector,
    ZeroColumnPolicy,
};
pub use nnls::{kkt_residuals, nnls_solve, nnls_solve_matrix, CoefficientMatrix};
pub use search::{
    complement_basis, iterate, poll_step, random_orthogonal, search_step_dilation,
    search_step_refit, IterationRecord, PollSign, RejectReason, SearchConfig, SearchState, StepTag,
    TangentMatrix,
};
