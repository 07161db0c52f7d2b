//! Process exit codes and the error carried up to `main`.

use std::fmt;

use despeckle::Error;

pub const IO: u8 = 1;
pub const USAGE: u8 = 2;
pub const NUMERIC: u8 = 3;
pub const GRADIENT: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(USAGE, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(IO, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn code_of(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Format(_) | Error::Checkpoint(_) | Error::Manifest { .. } => IO,
        Error::InvalidArgument(_)
        | Error::EmptyCorpus
        | Error::DimensionMismatch { .. }
        | Error::ShapeMismatch { .. } => USAGE,
        Error::NonFiniteGradient { .. }
        | Error::NonFiniteLoss { .. }
        | Error::UninitializedStatistics
        | Error::DegenerateBatch(_)
        | Error::BackwardBeforeForward(_) => NUMERIC,
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Self::new(code_of(&err), err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Self::io(err.to_string())
    }
}
