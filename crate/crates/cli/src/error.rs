use std::fmt;
use std::path::Path;

/// CLI failure, carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad arguments or mismatched inputs (exit 2).
    Config(String),
    /// The inference or planning code hit a numerical failure (exit 3).
    Numerical(String),
    /// Anything else, mostly I/O (exit 1).
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Other(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pgdm::Error> for CliError {
    fn from(e: pgdm::Error) -> Self {
        match e {
            pgdm::Error::InvalidArgument(m) | pgdm::Error::Validation(m) => CliError::Config(m),
            pgdm::Error::Numerical(m) => CliError::Numerical(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
