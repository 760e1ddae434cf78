//! Crate-wide error type and exit-code mapping for the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model/config dimensions or option values supplied by the caller.
    #[error("config: {0}")]
    Config(String),

    /// Malformed or inconsistent data (dataset files, records, checkpoints).
    #[error("data: {0}")]
    Data(String),

    /// Training or numerical failure (divergence, non-finite values).
    #[error("train: {0}")]
    Train(String),

    /// Metric or evaluation preconditions not met (e.g. single-class labels).
    #[error("eval: {0}")]
    Eval(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for data/config problems, 3 for
    /// training/numerical failures. Usage errors (exit 1) are handled by the
    /// argument parser before an `Error` is ever constructed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Train(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
