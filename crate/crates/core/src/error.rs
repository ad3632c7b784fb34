use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum FdError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("row {row} ({id}): expected {expected} values, found {found}")]
    RaggedRow {
        row: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("grid is not strictly increasing at column {col}")]
    NonIncreasingGrid { col: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("cluster {cluster} lost its responsibility mass ({mass:.3e}); refit with another seed")]
    ClusterDeath { cluster: usize, mass: f64 },
    #[error("curve {id}: {source}")]
    Curve {
        id: String,
        #[source]
        source: Box<FdError>,
    },
    #[error("every fit failed: {0}")]
    AllFitsFailed(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FdError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FdError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FdError::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, FdError>;
