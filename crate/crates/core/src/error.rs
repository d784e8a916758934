use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Domain(String),

    /// The stacked pilot response is (numerically) zero at this angle, so the
    /// gain cannot be eliminated.
    #[error("degenerate direction at theta = {theta} rad")]
    DegenerateDirection { theta: f64 },

    #[error("every grid point was degenerate")]
    AllDegenerate,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("Fisher information is singular")]
    SingularFisher,

    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
