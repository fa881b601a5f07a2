//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data failed a quality check (non-finite coordinate, malformed
    /// record, impossible clock value).
    #[error("data quality: {0}")]
    DataQuality(String),

    /// A caller violated an operation's contract (bad length, bad enum
    /// value, incompatible configuration).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Two input sequences that must have equal length do not.
    #[error("length mismatch: {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// A persisted artifact carries an unknown or incompatible version tag.
    #[error("format version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },

    /// A persisted artifact could not be decoded.
    #[error("parse error: {0}")]
    Parse(String),

    /// Checkpoint/dataset configuration does not match what the operation
    /// requires (e.g. fine-tuning from a checkpoint with different shape).
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    /// Training diverged (non-finite loss); carries a short diagnostic.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::DataQuality(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
