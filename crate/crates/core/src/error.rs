use thiserror::Error;

/// Errors raised by the sampling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: &'static str },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix does not have unit trace (trace {trace})")]
    NotUnitTrace { trace: f64 },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error(
        "peak state is rank deficient (minimum eigenvalue {min_eigenvalue:e}); \
         use a full-rank peak and reach the boundary with a shift"
    )]
    RankDeficientPeak { min_eigenvalue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value underflows double precision: {0}")]
    Underflow(String),

    #[error("proposal sample contains no entry with positive target density")]
    NoPhysicalEntries,

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("malformed sample file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
