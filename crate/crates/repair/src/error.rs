use std::path::PathBuf;

use thiserror::Error;

use crate::solver::RepairHistory;

/// Errors produced by loaders, trainers and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file (bad magic, ragged rows, id mismatches, ...).
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A caller-supplied value violates a precondition.
    #[error("{0}")]
    InvalidInput(String),

    /// Label entropy is zero: a single effective class, bias is undefined.
    #[error("label entropy is zero (all effective weight on a single class)")]
    ZeroEntropy,

    /// The batch entropy term fell below the configured floor.
    #[error("degenerate batch: |sum w_i log p'_i| = {magnitude:.3e} below floor {floor:.3e}")]
    DegenerateBatch { magnitude: f64, floor: f64 },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at step {step} (learning rate too high?)")]
    NonFiniteLoss { step: usize },

    /// The solver objective became non-finite; the history collected up to
    /// the failing step is preserved for inspection.
    #[error("non-finite objective at step {step}")]
    NonFiniteObjective { step: usize, history: Box<RepairHistory> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 for input problems, 3 for numeric
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Format { .. }
            | Error::InvalidInput(_)
            | Error::ZeroEntropy => 2,
            Error::DegenerateBatch { .. }
            | Error::NonFiniteLoss { .. }
            | Error::NonFiniteObjective { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
