use std::fmt;

use statemorph_core::Error;

/// Failures that end a command without a verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable or invalid input; exit code 3.
    Input(String),
    /// Numerical or construction failure; exit code 4.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn input(context: &str, e: impl fmt::Display) -> Self {
        CliError::Input(format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Library errors that describe the instance count as input errors.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotTracePreserving { .. } | Error::WitnessInconsistent(_) | Error::NonFinite | Error::NotPsd { .. } | Error::SvdFailed => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}
