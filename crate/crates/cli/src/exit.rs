//! Error-to-exit-code mapping shared by every subcommand.
//!
//! Exit codes: 0 success, 1 usage, 2 data/format, 3 numerical failure.
//! Library errors map by variant: parameter validation is a usage problem,
//! anything about files or dataset contents is a data problem, and
//! divergence or non-finite numbers are numerical.

use hdrsource::Error;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) => CliError::Usage(e.to_string()),
            Error::Numeric(_) => CliError::Numeric(e.to_string()),
            Error::Format { .. } | Error::Shape(_) | Error::Data(_) | Error::Io { .. } => {
                CliError::Data(e.to_string())
            }
        }
    }
}

/// Shorthand for flag-level validation failures.
pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Shorthand for I/O trouble outside the core library.
pub fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}
