use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("malformed row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A ciphertext multiplication would push the level past the budget.
    #[error("multiplicative depth exceeded: level {level} exceeds budget {budget}")]
    DepthExceeded { level: usize, budget: usize },

    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },

    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures originating in floating-point blow-up rather than
    /// bad inputs or budget violations.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::NanLoss { .. })
    }
}
