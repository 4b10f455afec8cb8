//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// An index (class label, token id, axis) is out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// Input data is malformed (NaN logits, out-of-range labels, ...).
    #[error("bad data: {0}")]
    Data(String),

    /// A caller contract was violated (wrong modality order, empty split, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The autodiff graph is in the wrong state for the call.
    #[error("graph state: {0}")]
    GraphState(String),

    /// Training aborted on a non-finite value.
    #[error("numerical abort: {0}")]
    Numeric(String),

    /// File parsing failed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A checkpoint or manifest failed its integrity check.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// File format version is not supported.
    #[error("incompatible version: {0}")]
    Incompatible(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
