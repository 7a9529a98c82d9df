//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of range for {len} wires")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("vector is not unit norm (norm {0})")]
    NonUnit(f64),
    #[error("zero-norm input")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    /// True for errors caused by malformed input or configuration rather than
    /// by the numerics of a run.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Numeric(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
