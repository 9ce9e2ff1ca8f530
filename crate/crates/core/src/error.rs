use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
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

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("example {id:?} has empty text")]
    EmptyText { id: String },

    #[error("dataset {dataset:?} has {found} distinct class(es); at least 2 are required")]
    TooFewClasses { dataset: String, found: usize },

    #[error("row {row}: expected {expected} values, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("episode quota names unknown dataset {0:?}")]
    UnknownDataset(String),

    #[error(
        "dataset {0:?} has no class with at least 2 examples; same-class pairs are impossible"
    )]
    NoSameClassPairs(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("no vector for example {0:?}")]
    MissingVector(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 1 usage/config, 2 data error, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonFinite(_) | Error::NonFiniteLoss { .. } => 3,
            _ => 2,
        }
    }
}
