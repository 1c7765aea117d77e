use thiserror::Error;

/// Coarse failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sample index {index} out of range for {n} samples")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("selection size {k} out of range for {n} samples")]
    SelectionSize { k: usize, n: usize },

    #[error("non-finite loss at index {index}")]
    NonFiniteLoss { index: usize },

    #[error("subset is empty")]
    EmptySubset,

    #[error("closed-form update requires the identity link")]
    NonIdentityLink,

    #[error("subset of size {size} is smaller than dimension {d}")]
    SubsetTooSmall { size: usize, d: usize },

    #[error("rank-deficient subset: sigma_min/sigma_max = {ratio:e} is below {tolerance:e}")]
    RankDeficient { ratio: f64, tolerance: f64 },

    #[error("parameter update produced non-finite values")]
    Diverged,

    #[error("enumerating {count} subsets exceeds the guard of {guard}")]
    EnumerationGuard { count: u128, guard: u128 },

    #[error("all {count} candidate subsets are rank-deficient")]
    AllSubsetsDeficient { count: u128 },

    #[error("dataset carries no ground-truth metadata")]
    MissingTruth,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::RankDeficient { .. }
            | Error::Diverged
            | Error::NonFiniteLoss { .. }
            | Error::AllSubsetsDeficient { .. } => ErrorKind::Numerical,
            Error::Io(_) | Error::Csv(_) | Error::Parse { .. } => ErrorKind::Io,
            _ => ErrorKind::Config,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
