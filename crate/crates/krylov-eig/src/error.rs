//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix market: {0}")]
    Market(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("orthogonalization breakdown: replacement direction needed")]
    OrthogonalizationBreakdown,

    #[error("all columns linearly dependent; no basis left")]
    EmptyBasis,

    #[error("Cholesky breakdown at pivot {index}: projected matrix not positive definite")]
    CholeskyBreakdown { index: usize },

    #[error("Jacobi eigensolver did not converge within the sweep cap")]
    EigNonConvergence,

    #[error("incomplete Cholesky breakdown persists after maximum diagonal shift; use the Jacobi preconditioner instead")]
    PrecondBreakdown,

    #[error("step-size hypothesis violated: {0}")]
    StepSizeHypothesis(&'static str),

    #[error("direction update: {0}")]
    DirectionUpdate(&'static str),

    #[error("quasi-optimality ratio undefined: iterate already converged")]
    RatioUndefined,

    #[error("insufficient history: {0}")]
    InsufficientHistory(&'static str),

    #[error("projected basis collapsed below two columns")]
    BasisCollapse,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
