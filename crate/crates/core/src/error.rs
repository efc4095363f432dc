//! Crate error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric or structural precondition on an operation's inputs failed.
    #[error("domain error: {0}")]
    Domain(String),

    /// Map generation exhausted its retry budget.
    #[error("map generation failed: {0}")]
    Generation(String),

    /// A scenario map file could not be parsed.
    #[error("map file parse error at line {line}: {msg}")]
    MapFile { line: usize, msg: String },

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A checkpoint file is malformed or truncated.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A checkpoint's fingerprint does not match the requested configuration.
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    /// Training produced a non-finite loss.
    #[error("training aborted: {0}")]
    TrainingAbort(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
