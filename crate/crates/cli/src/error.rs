use std::fmt;

use broker_assign::Error;

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invariant(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidConfig(_) | Error::UnknownPolicy(_) | Error::InfeasibleWorld(_) => CliError::Usage(msg),
            Error::Io { .. } | Error::Csv { .. } | Error::Json(_) | Error::Schema { .. } | Error::MissingUtility { .. } => {
                CliError::Io(msg)
            }
            Error::NotSquare { .. }
            | Error::NonFiniteWeight { .. }
            | Error::DimensionMismatch { .. }
            | Error::NegativeRadicand(_)
            | Error::NonPositiveDenominator(_)
            | Error::ResidueIncrease { .. }
            | Error::NotMatched(_)
            | Error::CapacityViolation { .. } => CliError::Invariant(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
