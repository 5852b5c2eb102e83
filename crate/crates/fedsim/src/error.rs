//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset too small: need at least {needed} records, have {have}")]
    Capacity { needed: usize, have: usize },

    #[error("partition redraw budget exhausted after {0} attempts")]
    RedrawBudget(usize),

    #[error("idx format: {0}")]
    IdxFormat(String),

    #[error("value table incomplete: missing subset {0:#x}")]
    IncompleteTable(u64),

    #[error("exact Shapley supports at most {cap} clients, got {n}")]
    TooManyClients { n: usize, cap: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
