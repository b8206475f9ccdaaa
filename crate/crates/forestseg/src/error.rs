use std::path::PathBuf;

/// Errors surfaced by the command-line tool.
///
/// `Validation` covers bad user input (exit code 1); everything else is an
/// internal failure (exit code 2).
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] forestseg_core::Error),

    #[error("{0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn validation(msg: impl Into<String>) -> Self {
        AppError::Validation(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) | AppError::Read { .. } | AppError::Core(_) => 1,
            AppError::Write { .. } | AppError::Internal(_) => 2,
        }
    }
}
