use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NsmError>;

#[derive(Debug, Error)]
pub enum NsmError {
    /// A threshold / gain denominator `lambda2 + M_ii` is not strictly positive,
    /// or some other structural invariant of the synaptic state is broken.
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("reference vector has zero norm")]
    ZeroReference,

    #[error("sample {index} has zero norm")]
    ZeroNormSample { index: usize },

    /// Integration blew past the divergence guard.
    #[error("{solver} diverged at step {step} (|value| = {magnitude:e})")]
    Divergence {
        solver: &'static str,
        step: usize,
        magnitude: f64,
    },

    /// Training aborted at a given online step.
    #[error("training aborted at step {step}: {source}")]
    Training {
        step: usize,
        #[source]
        source: Box<NsmError>,
    },

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl NsmError {
    /// True for failures of the numerics themselves (divergence, broken
    /// thresholds) as opposed to bad inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            NsmError::InvalidState(_) | NsmError::Divergence { .. } | NsmError::Eigen(_) => true,
            NsmError::Training { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
