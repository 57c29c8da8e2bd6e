use thiserror::Error;

/// Errors raised by the simulator.
///
/// The variants double as the failure categories the command-line runner
/// maps to exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("timing infeasible: {0}")]
    Timing(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
