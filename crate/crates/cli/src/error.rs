use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: chemo_core::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    /// 0 pass, 1 engine error, 2 validation error, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::Engine { source, .. } => match source {
                chemo_core::Error::Validation(_)
                | chemo_core::Error::Conformance { .. }
                | chemo_core::Error::InvalidParameter { .. } => 2,
                _ => 1,
            },
            CliError::Io { .. } => 1,
            CliError::VerifyFailed(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, chemo_core::Error> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Engine {
            context: what.into(),
            source,
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;
