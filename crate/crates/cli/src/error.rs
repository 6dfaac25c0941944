use std::path::Path;

use platecal::CalibError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad project configuration or a data file that violates its schema.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<CalibError> for CliError {
    fn from(e: CalibError) -> Self {
        match e {
            CalibError::Underdetermined { .. }
            | CalibError::SingularSystem { .. }
            | CalibError::Diverged(_)
            | CalibError::NoConvergence(_)
            | CalibError::NonFinite(_)
            | CalibError::BoundInfeasible(_) => CliError::Solver(e.to_string()),
            CalibError::Io(_) | CalibError::Csv(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
