//! Crate-wide error type.
//!
//! Fallible boundaries (file ingestion, configuration, checkpoints, training,
//! evaluation) return [`ResaeError`]. Tensor shape violations are programming
//! errors and panic with the offending op and shapes instead.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResaeError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("gradient check error: {0}")]
    GradCheck(String),

    #[error("training aborted: {0}")]
    Train(String),

    #[error("evaluation error: {0}")]
    Eval(String),
}

pub type Result<T> = std::result::Result<T, ResaeError>;

impl ResaeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ResaeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for usage/config problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ResaeError::Config(_) => 2,
            _ => 1,
        }
    }
}
