use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("batch norm evaluated before any training update")]
    UninitializedStats,

    #[error("transform family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("singular thin-plate spline system")]
    SingularTps,

    #[error("padding of {pad} px is too small: sample at ({x:.3}, {y:.3}) px falls outside the padded image")]
    PadTooSmall { pad: usize, x: f64, y: f64 },

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("bad tensor file {path}: {message}")]
    TensorFormat { path: PathBuf, message: String },

    #[error("bad image file {path}: {message}")]
    ImageFormat { path: PathBuf, message: String },

    #[error("training diverged at step {step}: loss {loss} stayed above 10x the initial loss {initial}")]
    Diverged { step: usize, loss: f64, initial: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
