use thiserror::Error;

/// Exit status contract: 0 success, 1 data error, 2 usage error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    /// Arguments that parse but cannot be honoured together.
    #[error("usage: {0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input data.
    #[error("{0:#}")]
    Data(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}
