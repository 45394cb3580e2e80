use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the stance pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Input file is structurally wrong (bad magic, wrong dimension, too many malformed lines).
    #[error("format error: {0}")]
    Format(String),

    /// Caller violated an operation precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Inputs are individually well formed but inconsistent with each other.
    #[error("data error: {0}")]
    Data(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    /// Failure inside one pipeline stage; the stage name is kept for reporting.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
