use std::path::PathBuf;

use longline::{DataError, EstimateError};
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: DataError },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input { source: DataError::Io(_), .. } => EXIT_IO,
            CliError::Input { .. } => EXIT_INPUT,
            CliError::Io { .. } => EXIT_IO,
            CliError::Estimate(e) => match e {
                EstimateError::Data(DataError::Io(_)) => EXIT_IO,
                EstimateError::Data(_) => EXIT_INPUT,
                EstimateError::Domain(_) => EXIT_USAGE,
                _ => EXIT_NUMERICAL,
            },
        }
    }
}
