use std::path::PathBuf;

use fragnet_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FragError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("page {page_id} appears in both the training and the testing split")]
    SplitViolation { page_id: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl FragError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FragError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = FragError> = std::result::Result<T, E>;
