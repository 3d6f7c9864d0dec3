use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("stage {stage} requires {required}: {reason}")]
    MissingPrerequisite { stage: String, required: String, reason: String },
    #[error("stage {stage}: {message}")]
    Provenance { stage: String, message: String },
    #[error("output directory is locked by {0}")]
    Locked(PathBuf),
    #[error(transparent)]
    Core(#[from] vocabforge_core::Error),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error("internal: {0}")]
    Internal(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        AppError::Data { path: path.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) | AppError::Config(_) => EXIT_USAGE,
            AppError::Core(vocabforge_core::Error::Config(_)) => EXIT_USAGE,
            AppError::Internal(_) => EXIT_INTERNAL,
            _ => EXIT_DATA,
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
