//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by validation, solver execution, and file I/O.
#[derive(Debug, Error)]
pub enum RhuidrError {
    /// A matrix did not have the shape required by an operation.
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    /// A matrix contained a NaN or infinite entry.
    #[error("non-finite entry at ({row}, {col}) in {context}")]
    NonFinite {
        context: &'static str,
        row: usize,
        col: usize,
    },

    /// A pixel coordinate fell outside the image grid.
    #[error("pixel ({row}, {col}) out of range for {n1}x{n2} grid")]
    PixelOutOfRange {
        row: usize,
        col: usize,
        n1: usize,
        n2: usize,
    },

    /// A scalar parameter violated its contract.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The solver produced a non-finite iterate.
    #[error("non-finite value in block {block} at iteration {iter}")]
    NonFiniteIterate { block: String, iter: usize },

    /// A file did not match the expected on-disk format.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, RhuidrError>;

impl RhuidrError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RhuidrError::InvalidParam(msg.into())
    }

    pub(crate) fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        RhuidrError::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        RhuidrError::Io {
            path: path.into(),
            source,
        }
    }
}
