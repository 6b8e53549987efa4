use thiserror::Error;

use crate::trajgen::Mechanism;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown mechanism label `{0}`")]
    UnknownLabel(String),

    #[error("alpha {alpha} is outside the admissible range for {label}")]
    AlphaOutOfRange { label: Mechanism, alpha: f64 },

    #[error("trajectory too short: need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },

    #[error("trajectory of length {len} exceeds target length {target}")]
    TooLong { len: usize, target: usize },

    #[error("degenerate trajectory: {0}")]
    Degenerate(String),

    #[error("noise amplitude must be non-negative, got {0}")]
    NegativeNoise(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward called on a value that is not a differentiable scalar")]
    Detached,

    #[error("non-finite gradient in parameter `{0}`; step rejected")]
    NonFiniteGradient(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class index {0} out of range")]
    ClassIndex(usize),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("model has not been trained")]
    Untrained,

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
