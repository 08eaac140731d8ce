use std::io;

use thiserror::Error;

use crate::dist::wire::DecodeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The policy architecture description is invalid.
    #[error("invalid policy spec: {0}")]
    Spec(String),
    /// A flat parameter vector does not fit the layout of its spec.
    #[error("parameter layout mismatch: expected {expected} values, got {actual}")]
    Layout { expected: usize, actual: usize },
    /// Input dimensions disagree with the spec.
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("decode error: {0}")]
    Decode(#[from] DecodeError),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("worker failure: {0}")]
    WorkerFailure(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            what,
            expected,
            actual,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Spec(_) => 2,
            Error::Transport(_) | Error::Decode(_) => 3,
            Error::WorkerFailure(_) => 4,
            _ => 1,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(what, expected, actual))
    }
}
