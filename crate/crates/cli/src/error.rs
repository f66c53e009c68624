use std::fmt;

/// Errors surfaced by the command line and the session service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    Integrity(String),
    Io(String),
    UnknownFixture(String),
    Usage(String),
    Core(vfair_core::Error),
}

impl CliError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use vfair_core::Error as E;
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::Integrity(_) => "invalid_instance",
            CliError::Io(_) => "io_error",
            CliError::UnknownFixture(_) => "unknown_fixture",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                E::InvalidRanking { .. } => "invalid_ranking",
                E::NoAdmissibleZone { .. } | E::EmptyMenu { .. } => "not_solvent",
                E::CapExceeded { .. } => "cap_exceeded",
                E::Precondition(_) => "precondition",
                _ => "invalid_instance",
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse { line, column, message } => {
                if message.contains(" at line ") {
                    write!(f, "{message}")
                } else {
                    write!(f, "{message} at line {line} column {column}")
                }
            }
            CliError::Integrity(m) | CliError::Io(m) | CliError::Usage(m) => f.write_str(m),
            CliError::UnknownFixture(name) => write!(f, "no instance file or built-in fixture named `{name}`"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vfair_core::Error> for CliError {
    fn from(e: vfair_core::Error) -> Self {
        CliError::Core(e)
    }
}
