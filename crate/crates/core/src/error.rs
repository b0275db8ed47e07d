use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MgamError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MgamError {
    /// Caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("load error in {path}:{line}: {msg}")]
    Load {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("load error in {path}: {msg}")]
    LoadFile { path: PathBuf, msg: String },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("config error for key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MgamError {
    pub fn usage(msg: impl Into<String>) -> Self {
        MgamError::Usage(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        MgamError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Process exit status for this error: 2 for usage/config problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            MgamError::Usage(_) | MgamError::Config { .. } => 2,
            _ => 1,
        }
    }
}
