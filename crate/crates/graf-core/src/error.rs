//! Crate-wide error type.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    /// A computation produced NaN or Inf; `op` names the offending operation.
    NonFinite { op: String, detail: String },
    /// Misuse of the tape API (e.g. backward without a scalar root).
    Usage(String),
    /// File I/O with path context.
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed CSV or JSON input.
    Parse(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite { op, detail } => {
                write!(f, "non-finite value produced by `{op}`: {detail}")
            }
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
