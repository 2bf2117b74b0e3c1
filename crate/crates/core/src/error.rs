use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context} at line {line}, column {column}: {message}")]
    Parse { context: String, line: usize, column: usize, message: String },

    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error("invalid task {task}: {reason}")]
    InvalidTask { task: String, reason: String },

    #[error("goal unreachable for task {task} from screen {screen}")]
    Unreachable { task: String, screen: String },

    #[error("unknown {what}: {name}")]
    Unknown { what: &'static str, name: String },

    #[error("world generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("metric error: {0}")]
    Metric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(context: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse { context: context.into(), line: err.line(), column: err.column(), message: err.to_string() }
    }
}
