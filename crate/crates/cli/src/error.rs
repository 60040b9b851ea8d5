use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("synthesis failed: {0}")]
    Synthesis(satchain::Error),

    #[error("{0}")]
    Integration(satchain::Error),

    #[error("certification failed: {0}")]
    Certification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Read { .. } | CliError::Write { .. } => 1,
            CliError::Synthesis(_) => 2,
            CliError::Integration(_) => 3,
            CliError::Certification(_) => 4,
        }
    }

    /// Maps a library error raised while running a scenario.
    pub fn from_run(e: satchain::Error) -> Self {
        match e {
            satchain::Error::InvalidParameter(m) => CliError::Config(m),
            other => CliError::Integration(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
