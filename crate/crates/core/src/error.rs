use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the featurization, training and prediction stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("integrity error in {path} line {line}: {msg}")]
    Integrity { path: PathBuf, line: usize, msg: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("cache version mismatch: {0}")]
    CacheVersion(String),

    #[error("missing cache: {0}")]
    MissingCache(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Process exit code used by the command-line tool for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format { .. } | Error::Integrity { .. } | Error::InvalidGraph(_) | Error::Config(_) => 2,
            Error::CacheVersion(_) => 3,
            Error::Divergence { .. } => 4,
            Error::MissingCache(_) => 5,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
