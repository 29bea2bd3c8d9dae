use thiserror::Error;

/// Errors surfaced by the inversion library.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be symmetric positive definite failed its Cholesky
    /// factorization even after the escalating jitter attempts.
    #[error("matrix is not positive definite (Cholesky failed after jitter)")]
    NonPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// A forward-map evaluation produced a non-finite value or failed outright.
    /// `point` is the sigma-point index (0 = central point).
    #[error("forward model failed at sigma point {point}")]
    ForwardModelFailure { point: usize },

    #[error("jacobian required but not provided by the forward model")]
    JacobianUnavailable,

    #[error("forward map undefined: {0}")]
    DomainError(String),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    /// Too many pull-back draws left the inverse map's domain.
    #[error("pull-back sampling rejected {rejected} of {total} draws")]
    DomainExhausted { rejected: usize, total: usize },

    /// The quadrature bracket truncates non-negligible posterior mass.
    #[error("quadrature bracket suspect: endpoint density {endpoint:.3e} vs peak {peak:.3e}")]
    TruncationSuspect { endpoint: f64, peak: f64 },

    /// A step error with the iteration index it occurred at.
    #[error("inversion step {iteration} failed: {source}")]
    StepFailed {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
