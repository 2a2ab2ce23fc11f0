use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates its precondition.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument handed to an operation is malformed.
    #[error("input error: {0}")]
    Input(String),
    /// A computation produced (or was fed) a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A record in a JSONL file could not be parsed or violates its schema.
    #[error("{path}:{line}: {msg}")]
    Schema { path: PathBuf, line: usize, msg: String },
    /// Several configuration violations reported together.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
