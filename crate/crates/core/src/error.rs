use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },

    #[error("timestamps not strictly increasing at sample {index} (t = {t})")]
    NonMonotone { index: usize, t: f64 },

    #[error("every interval of the stream exceeds the gap threshold")]
    AllGaps,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("class {label} has {count} samples, fewer than {folds} folds")]
    TooFewPerClass { label: i8, count: usize, folds: usize },

    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    #[error("prefix evaluated out of schedule order: {0}")]
    OutOfOrder(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
