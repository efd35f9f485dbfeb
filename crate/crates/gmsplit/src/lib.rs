//! Nonlinear uncertainty propagation by moment-preserving Gaussian mixture
//! splitting.
//!
//! A Gaussian (or Gaussian mixture) is refined by recursively replacing
//! mixands with small mixtures that preserve the overall mean and covariance,
//! splitting along directions chosen by a family of nonlinearity- and
//! uncertainty-informed heuristics. The refined mixture is then pushed
//! through a nonlinear map by per-mixand linearization and compared against
//! analytic or Monte Carlo truth densities with a set of density-agreement
//! metrics.
//!
//! Module map:
//! - [`linalg`]: SPD factorizations, rank-1 downdates, whitening, generalized
//!   symmetric eigenproblems.
//! - [`tensor`]: order-3 derivative tensors, their squares, and the shifted
//!   symmetric higher-order power iteration for Z-eigenpairs.
//! - [`mixture`]: Gaussian / mixture value types, densities, moments, and
//!   closed-form inner products.
//! - [`splitlib`]: the univariate standard-normal split library.
//! - [`model`]: the differentiable-map abstraction shared by heuristics and
//!   scenarios.
//! - [`heuristics`]: splitting-direction selection.
//! - [`split`]: moment-preserving multivariate splitting and the recursive
//!   split operator.
//! - [`scenarios`]: the polar, two-body, and CR3BP benchmark maps.
//! - [`metrics`]: NISE, CvM marginal norm, MaDEM, MCR, ELK.

pub mod error;
pub mod heuristics;
pub mod linalg;
pub mod metrics;
pub mod mixture;
pub mod model;
pub mod quad;
pub mod scenarios;
pub mod split;
pub mod splitlib;
pub mod tensor;
pub mod testing;

pub use error::{Error, Result};
