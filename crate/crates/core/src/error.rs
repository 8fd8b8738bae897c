use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mouth closure rejected: {0}")]
    MouthClosure(String),

    #[error("UV rasterization produced no samples (resolution {resolution})")]
    EmptyCoverage { resolution: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite attribute on gaussian {index}: {attribute}")]
    NonFinite { index: usize, attribute: &'static str },

    #[error("forward state does not match backward request: {0}")]
    ForwardStateMismatch(String),

    #[error("non-finite loss at step {step} (frame {frame_id})")]
    NonFiniteLoss { step: u64, frame_id: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: bad binary file at offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("config hash mismatch: bundle config {expected}, checkpoint {actual}")]
    ConfigHashMismatch { expected: String, actual: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
