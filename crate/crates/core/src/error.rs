use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cluster {cluster} has {size} samples; at least 2 are required")]
    DegenerateCluster { cluster: usize, size: usize },

    #[error("sample {sample_id} has a zero-norm feature vector; cosine distance is undefined")]
    ZeroNorm { sample_id: u64 },

    #[error("a cluster of {size} samples is too small for a k sweep; at least 2 are required")]
    ClusterTooSmall { size: usize },

    #[error("k = {k} is out of range [1, {max}]")]
    KOutOfRange { k: usize, max: usize },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sample {sample_id} appears in more than one cluster")]
    DuplicateSample { sample_id: u64 },

    #[error("label vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("could not place {k} centers at separation {separation} after {attempts} attempts")]
    InfeasibleSeparation {
        k: usize,
        separation: f64,
        attempts: usize,
    },

    #[error("malformed file: field `{field}`: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code: 3 for configuration errors, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig { .. } | Error::KOutOfRange { .. } | Error::InfeasibleSeparation { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn input(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
