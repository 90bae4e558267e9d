use thiserror::Error;

use crate::tensor::TensorError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid {field}: {msg}")]
    Validation { field: String, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), msg: msg.into() }
    }

    /// Process exit status: 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::Tensor(TensorError::NonFinite { .. }) => 2,
            _ => 1,
        }
    }
}
