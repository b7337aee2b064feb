use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration has nonzero env-env couplings; the arrowhead path needs a star topology")]
    NotStar,

    #[error(
        "step-halving check failed: max |p_e(h) - p_e(h/2)| = {max_diff:.3e} at tau = {tau} (step {step}); reduce the step"
    )]
    StepRefinement { step: f64, max_diff: f64, tau: f64 },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
