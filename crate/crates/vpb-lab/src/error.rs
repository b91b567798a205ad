//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("velocity grid rejected: {0}")]
    GridRejected(String),

    #[error("operator assembly failed: {0}")]
    Assembly(String),

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("right-hand side has macroscopic component {defect:.3e} above tolerance {tol:.3e}")]
    MacroResidual { defect: f64, tol: f64 },

    #[error("non-finite value encountered at step {step}: {context}")]
    NonFinite { step: usize, context: String },

    #[error("mode energy increased by {increase:.3e} (relative) at step {step}; integrator too coarse")]
    MonotonicityLoss { step: usize, increase: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{0}")]
    Diagnostics(String),
}
