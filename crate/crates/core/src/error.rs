use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("setting pair {pair} has zero trials")]
    ZeroTrials { pair: &'static str },

    #[error("infeasible displacements: {0}")]
    InfeasibleDisplacements(String),

    #[error("no root in range: {0}")]
    NoRoot(String),

    #[error("malformed stream: {0}")]
    MalformedStream(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("record `{record}` is missing `{field}`")]
    MissingField { record: String, field: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that signal a mathematically empty answer rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::InfeasibleDisplacements(_) | Error::NoRoot(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
