use std::fmt;

use shepard_hjb::Error;

pub const OK: u8 = 0;
pub const INPUT: u8 = 2;
pub const NOT_CONVERGED: u8 = 3;
pub const IO: u8 = 4;
/// Runtime failures that are neither bad input nor I/O, e.g. a failed table row.
pub const FAILED: u8 = 5;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    NotConverged(String),
    Io(String),
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => INPUT,
            CliError::NotConverged(_) => NOT_CONVERGED,
            CliError::Io(_) => IO,
            CliError::Failed(_) => FAILED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Failed(m) => write!(f, "failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => CliError::Io(e.to_string()),
            Error::Input(_)
            | Error::DegenerateMesh(_)
            | Error::Capacity { .. }
            | Error::Unsupported(_)
            | Error::Parse(_)
            | Error::Json(_) => CliError::Input(e.to_string()),
            Error::LinearSolve { .. } | Error::NonFinite { .. } | Error::UndefinedMetric(_) | Error::TunerExhausted => {
                CliError::Failed(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
