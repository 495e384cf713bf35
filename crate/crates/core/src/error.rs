use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {dims:?}: {reason}")]
    InvalidShape { dims: Vec<usize>, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u8, found: u8 },

    #[error("precision mismatch: file stores {found}-byte elements, expected {expected}")]
    PrecisionMismatch { expected: u8, found: u8 },

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("model is inconsistent with its config: {0}")]
    ShapeInconsistency(String),

    #[error("invalid network config: {0}")]
    InvalidConfig(String),

    #[error("numeric divergence at iteration {iteration}: {detail}")]
    NumericDivergence { iteration: usize, detail: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("no embedding for sample {0:?}")]
    MissingEmbedding(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
