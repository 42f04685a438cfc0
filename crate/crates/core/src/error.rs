use thiserror::Error;

/// Errors raised anywhere in the inference pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    /// The circuit (or model) assigns zero mass to the requested event.
    #[error("inconsistent: {0}")]
    Inconsistent(String),

    #[error("no variable left to select")]
    SelectionExhausted,

    #[error("no estimate: all {0} samples were rejected")]
    NoEstimate(usize),

    #[error("state space of {states} assignments exceeds the enumeration cap of {cap}")]
    TooLarge { states: u128, cap: u128 },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) | Error::Unsupported(_) => 2,
            Error::Parse { .. } => 3,
            Error::Domain(_) => 4,
            Error::Inconsistent(_) | Error::NoEstimate(_) | Error::SelectionExhausted => 5,
            Error::TooLarge { .. } | Error::Resource(_) => 6,
            Error::Io(_) => 7,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
