use alloc::string::String;
use core::fmt;

/// Errors raised by the hashing and indexing primitives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidInput(String),
    /// The input is well-formed but the requested operation does not apply to
    /// it, e.g. rotating a non-square image.
    Unsupported(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
