use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("line {line}: rule weight {weight} outside (0, 1]")]
    WeightRange { line: usize, weight: f64 },

    #[error("rule weight {0} outside (0, 1]")]
    InvalidWeight(f64),

    #[error("duplicate rule {premise:?} => {conclusion:?}")]
    DuplicateRule { premise: String, conclusion: String },

    #[error("self-implication on label {0:?}")]
    SelfImplication(String),

    #[error("label {0:?} cannot be written as an ASP string constant")]
    Encoding(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for {len} documents")]
    OutOfRange { index: usize, len: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: bce={bce}, fuzzy={fuzzy}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        bce: f64,
        fuzzy: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("external solver: {0}")]
    Solver(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
