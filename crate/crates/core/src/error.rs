use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("duplicate article id `{0}`")]
    DuplicateArticle(String),

    #[error("unknown article id `{0}`")]
    UnknownArticle(String),

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("prompt placeholder [{0}] has no value")]
    MissingPlaceholder(String),

    #[error("completion failed for {subject}: {message}")]
    Completion { subject: String, message: String },

    #[error("no precomputed embedding for `{0}`")]
    MissingEmbedding(String),

    #[error("store version {store} does not match checkpoint {checkpoint}")]
    VersionMismatch { store: String, checkpoint: String },

    #[error("non-finite loss at step {step}; offending batch: {dump}")]
    NonFiniteLoss { step: usize, dump: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
