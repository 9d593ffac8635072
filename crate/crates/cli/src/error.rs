use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] kinegen::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Process exit status: 2 validation, 3 numerical abort, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(kinegen::Error::NonFinite(_)) => 3,
            CliError::Core(kinegen::Error::Io(_)) | CliError::Io { .. } => 4,
            CliError::Core(_) | CliError::Config(_) | CliError::Usage(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
