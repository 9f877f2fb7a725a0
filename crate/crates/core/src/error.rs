//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by solver and linear-algebra operations.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A caller-supplied value violated a precondition (shape mismatch,
    /// out-of-range parameter, infeasible starting point, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numerical routine could not produce a usable result (non-finite
    /// step size, SVD breakdown, exhausted backtracking, ...).
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }
}
