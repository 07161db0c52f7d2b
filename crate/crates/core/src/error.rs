use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands disagree in a named dimension.
    #[error("{op}: {dim} mismatch (expected {expected}, got {actual})")]
    DimensionMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: shape {actual:?} does not match {expected:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: [usize; 4],
        actual: [usize; 4],
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}: backward called before forward")]
    BackwardBeforeForward(&'static str),

    #[error("batch norm has uninitialized statistics; run at least one training batch first")]
    UninitializedStatistics,

    #[error("batch norm needs at least two values per channel, got {0}")]
    DegenerateBatch(usize),

    #[error("non-finite gradient in {layer}")]
    NonFiniteGradient { layer: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("image format: {0}")]
    Format(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether the failure is numeric (non-finite values) rather than I/O or usage.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
