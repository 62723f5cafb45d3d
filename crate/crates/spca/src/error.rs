//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by matrix construction, solvers, and metrics.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix entry was NaN or infinite.
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    /// Shapes do not line up for the requested operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A parameter is outside its documented range.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Input is structurally unusable (rank deficient, empty, non-positive, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An ordered-spectrum argument violates its ordering cone.
    #[error("spectrum ordering violated at indices {indices:?}: {message}")]
    InfeasibleSpectrum { indices: Vec<usize>, message: String },

    /// An iterative routine failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
