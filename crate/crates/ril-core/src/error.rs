//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural invariant of a type or configuration was violated.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A numerical procedure failed (singular system, no convergence).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A file did not match its expected format.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
