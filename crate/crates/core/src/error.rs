use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing rank for property `{key}` at scope {scope}")]
    MissingRank { key: String, scope: String },

    #[error("design matrix is rank deficient at column `{column}`")]
    RankDeficient { column: String },

    #[error("too few observations: {rows} rows for {columns} columns")]
    Underdetermined { rows: usize, columns: usize },

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
