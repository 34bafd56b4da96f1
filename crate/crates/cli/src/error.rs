use std::fmt;

use korse_core::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_VALIDATION: u8 = 4;
pub const EXIT_INVARIANT: u8 = 5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Validation(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Core(e) => match e {
                Error::Io { .. }
                | Error::Parse { .. }
                | Error::DimensionMismatch { .. }
                | Error::MissingEmbedding(_) => EXIT_INPUT,
                Error::DuplicateId { .. } | Error::EdgelessGraph | Error::SingleClass | Error::Stratification(_) => {
                    EXIT_VALIDATION
                }
                Error::InvalidArgument(_) => EXIT_USAGE,
                Error::Invariant(_) => EXIT_INVARIANT,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Input(m) => write!(f, "input: {m}"),
            CliError::Validation(m) => write!(f, "validation: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}
