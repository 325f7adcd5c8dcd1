use std::path::PathBuf;

use semtx_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const CAP_EXCEEDED: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::ConfigRead { .. } | AppError::ConfigParse { .. } | AppError::Usage(_) => exit::CONFIG,
            AppError::Core(CoreError::Config(_)) => exit::CONFIG,
            AppError::Core(CoreError::Diverged { .. }) => exit::DIVERGED,
            AppError::Core(CoreError::CapExceeded { .. }) => exit::CAP_EXCEEDED,
            _ => exit::FAILURE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        AppError::Format { path: path.into(), message: message.to_string() }
    }
}

pub type AppResult<T> = Result<T, AppError>;
