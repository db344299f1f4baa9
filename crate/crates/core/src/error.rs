use std::path::PathBuf;

use thiserror::Error;

use crate::design::SearchCategory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("engine {engine} has no {category} category")]
    AbsentCategory {
        engine: String,
        category: SearchCategory,
    },

    #[error("unknown engine {0}")]
    UnknownEngine(String),

    #[error("unknown collection {0}")]
    UnknownCollection(String),

    #[error("collector is not configured with engine and query lists")]
    Unconfigured,

    #[error("token rejected: {0}")]
    Rejected(String),

    #[error("collector overloaded, retry after {retry_after_ms} ms")]
    RetryLater { retry_after_ms: u64 },

    #[error("corrupt manifest {path} line {line}: {reason}")]
    CorruptManifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("design inconsistency: {0}")]
    DesignInconsistency(String),

    #[error("no disjoint query data available for an out-of-sample estimate")]
    NoDisjointData,

    #[error("configuration: {0}")]
    Config(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
