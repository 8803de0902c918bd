use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the SACF library.
///
/// Variants fall in two families: input/validation problems and
/// numerical/training failures. [`Error::is_numerical`] tells them apart so
/// front-ends can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON on line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed JSON document {path}: {source}")]
    JsonDocument {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("frame {frame_id}: {message}")]
    Invariant { frame_id: String, message: String },

    #[error("frame {frame_id}: missing scene features")]
    MissingFeatures { frame_id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("scene placement failed after {attempts} attempts: {limit}")]
    Placement { attempts: usize, limit: String },

    #[error("single-class split: all {n} training frames have label {label}")]
    SingleClassSplit { n: usize, label: u8 },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    pub fn invariant(frame_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            frame_id: frame_id.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the optimisation itself (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingleClassSplit { .. } | Error::NonFiniteLoss { .. }
        )
    }
}
