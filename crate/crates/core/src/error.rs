//! Error type shared across the pipeline.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Malformed file contents (bad magic, truncated payload, bad field).
    Format(String),
    /// A path or file name that does not follow the expected pattern.
    Name(String),
    /// An operation precondition was violated by the caller.
    Precondition(String),
    /// A pixel group query matched no samples.
    EmptyGroup(String),
    /// Not enough frames in the time span to compute a motion statistic.
    InsufficientHistory(String),
    /// A frame's (hour, tile) key is missing from the mixture bank.
    Coverage(String),
    /// Model training could not proceed (single class, empty input, ...).
    Training(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Name(msg) => write!(f, "name error: {msg}"),
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::EmptyGroup(msg) => write!(f, "empty pixel group: {msg}"),
            Error::InsufficientHistory(msg) => write!(f, "insufficient history: {msg}"),
            Error::Coverage(msg) => write!(f, "bank coverage error: {msg}"),
            Error::Training(msg) => write!(f, "training error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}
