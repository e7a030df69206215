use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture spec: {0}")]
    InvalidSpec(String),

    #[error("unknown class label `{0}`")]
    UnknownLabel(String),

    #[error("degenerate marginal covariance at t={t}")]
    DegenerateMarginal { t: f64 },

    #[error("x1 coincides with the unconditional mean; the initial ratio is undefined")]
    ZeroDenominator,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step index {index} out of range for a table of {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least 3 usable pairs with w* > 1, got {usable} ({excluded} excluded)")]
    InsufficientPoints { usable: usize, excluded: usize },

    #[error("degenerate fit: all ratios identical")]
    DegenerateFit,

    #[error("fitted decay rate {alpha_hat} is not positive")]
    NonDecayingFit { alpha_hat: f64 },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("insufficient seeds: {0}")]
    InsufficientSeeds(String),

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
