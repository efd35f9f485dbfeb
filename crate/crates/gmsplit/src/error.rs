//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("rank-1 downdate violates the positive-definiteness threshold: alpha = {alpha}, alpha* = {alpha_star}")]
    DowndateViolation { alpha: f64, alpha_star: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("power iteration failed to converge within {max_iter} iterations (best residual {residual})")]
    NoConvergence { max_iter: usize, residual: f64 },

    #[error("univariate split optimization infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    ParseError(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("map is singular at the origin")]
    OriginSingularity,

    #[error("semi-major axis must be positive, got {0}")]
    NonPositiveSMA(f64),

    #[error("integration failure: {0}")]
    IntegrationFailure(String),

    #[error("quadrature failed to converge: {0}")]
    QuadratureFailure(String),

    #[error("output covariance is singular; whitened heuristic undefined")]
    SingularOutputCovariance,

    #[error("heuristic {0} requires second derivatives but none were supplied")]
    MissingHessian(String),

    #[error("heuristic {0} requires a sigma-point configuration but none was supplied")]
    MissingSigma(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
