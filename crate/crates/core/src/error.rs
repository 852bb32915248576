use thiserror::Error;

/// Errors raised by the library. Numerical variants carry the name of the
/// operation that failed so front ends can report it.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("convergence failure in {op}: {msg}")]
    Convergence { op: &'static str, msg: String },

    #[error("range error in {op}: {msg}")]
    Range { op: &'static str, msg: String },

    #[error("branch tracking failed in {op}: {msg}")]
    Branch { op: &'static str, msg: String },

    #[error("truncation error in {op}: {msg}")]
    Truncation { op: &'static str, msg: String },

    #[error("alias error in {op}: {msg}")]
    Alias { op: &'static str, msg: String },

    #[error("bracket error in {op}: {msg}")]
    Bracket { op: &'static str, msg: String },

    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("insufficient data: {n} observations, at least {min} required")]
    InsufficientData { n: usize, min: usize },

    #[error("no convergence in {op}: {msg}")]
    NoConvergence { op: &'static str, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain { op, msg: msg.into() }
    }

    pub(crate) fn convergence(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Convergence { op, msg: msg.into() }
    }

    pub(crate) fn range(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Range { op, msg: msg.into() }
    }

    /// True for input validation failures, false for numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Domain { .. } | Error::Parse { .. } | Error::InsufficientData { .. } | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
