use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    // The io error is part of the message rather than a source, so callers
    // that print error chains show it once.
    #[error("{}: {error}", path.display())]
    Io { path: PathBuf, error: std::io::Error },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("group count {groups} exceeds population size {users}")]
    TooManyGroups { groups: usize, users: usize },

    #[error("weighted centroid undefined: {0}")]
    ZeroWeight(String),

    #[error("exact Shapley enumeration supports at most {max} players, got {n}; use the kernel or permutation estimator")]
    TooManyPlayers { n: usize, max: usize },

    #[error("insufficient coalition coverage: {0}")]
    InsufficientCoverage(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("missing sweep cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),

    #[error("sample pool exhausted before iteration {iteration}")]
    PoolExhausted { iteration: usize },

    #[error("{cell}: {error}")]
    Cell { cell: String, error: Box<Error> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            error: source,
        }
    }
}
