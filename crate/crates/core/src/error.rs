use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the relmrf library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of an operation (bad ids, self pairs, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or training data.
    #[error("configuration error: {0}")]
    Config(String),

    /// A required prior was missing while building a graph in strict mode.
    #[error("no prior for pair ({left}, {right})")]
    MissingPrior { left: usize, right: usize },

    /// An input file could not be parsed. `line` is 1-based and counts the header.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Predicted and gold label sets do not cover the same pairs.
    #[error("coverage mismatch: {0}")]
    Coverage(String),

    /// The exhaustive oracle refuses graphs above its variable cap.
    #[error("exact MAP oracle supports at most {cap} variables, graph has {actual}")]
    TooManyVariables { cap: usize, actual: usize },

    /// Failure while running one partition of a partitioned inference.
    #[error("partition {partition} (anchor {anchor}): {source}")]
    Partition {
        partition: usize,
        anchor: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("worker pool: {0}")]
    WorkerPool(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
