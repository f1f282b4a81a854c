//! Error taxonomy mapped onto process exit codes.

use thiserror::Error;

/// Exit codes: 0 success, 2 validation, 3 fit failure, 4 I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Fit(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
