//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by construction, assembly, solving and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,

    #[error("semidefinite solve failed at alpha = {alpha}: {reason}")]
    SolverFailure { alpha: f64, reason: String },

    #[error("simulation diverged at t = {t}")]
    BlowUp { t: f64 },

    #[error("trajectory did not converge: terminal deviation {terminal:e} vs initial {initial:e}")]
    NonConvergent { terminal: f64, initial: f64 },

    #[error("minimizer search failed: |grad| = {grad_norm:e} after {iters} iterations")]
    MinimizerSearch { grad_norm: f64, iters: usize },

    #[error("plant validation failed: {0}")]
    PlantValidation(String),

    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
