use thiserror::Error;

use qrnn_core::training::TrainError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DIVERGED: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Diverged(String),
    #[error(transparent)]
    Core(#[from] qrnn_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diverged(_) => exit::DIVERGED,
            CliError::Core(qrnn_core::Error::Divergence(_)) => exit::DIVERGED,
            _ => exit::USAGE,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            d @ TrainError::Diverged { .. } => CliError::Diverged(d.to_string()),
            TrainError::Other(e) => CliError::Core(e),
        }
    }
}
