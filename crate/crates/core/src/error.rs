use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the inversion pipeline.
///
/// Variants are grouped by the exit code the command line front end maps them to
/// (see [`DsiError::exit_code`]).
#[derive(Debug, Error)]
pub enum DsiError {
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("rank zero: matrix has no positive singular values")]
    RankZero,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("alpha schedule does not sum to one (sum of 1/alpha = {0})")]
    InvalidSchedule(f64),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown data kind '{0}'")]
    UnknownKind(String),

    #[error("observation targets non-history element '{0}'")]
    NonHistoryObservation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DsiError {
    /// Process exit code: 2 for configuration errors, 3 for data errors,
    /// 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            DsiError::Config(_) | DsiError::InvalidSchedule(_) => 2,
            DsiError::RankZero | DsiError::Numerical(_) => 4,
            DsiError::Io { .. } => 3,
            DsiError::DegenerateEnsemble(_)
            | DsiError::DimensionMismatch { .. }
            | DsiError::InvalidInput(_)
            | DsiError::Parse { .. }
            | DsiError::UnknownKind(_)
            | DsiError::NonHistoryObservation(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DsiError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(context: impl Into<String>, expected: usize, found: usize) -> Self {
        DsiError::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}

pub type Result<T> = std::result::Result<T, DsiError>;
