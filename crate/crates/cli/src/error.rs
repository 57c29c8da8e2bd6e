use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config file contents; the message leads with the key path.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] ddsim_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit code: 2 config, 3 timing, 4 calibration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use ddsim_core::Error as E;
        match self {
            Self::Config(_) | Self::Sim(E::Argument(_) | E::Parse(_)) => 2,
            Self::Sim(E::Timing(_) | E::Schedule(_)) => 3,
            Self::Sim(E::Calibration(_)) => 4,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
