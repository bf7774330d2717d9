use alloc::boxed::Box;
use alloc::string::String;

use crate::calibration::CalibrationStage;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Cholesky factorization failed even after the jitter ladder.
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },

    #[error("usage error: {0}")]
    UsageError(String),

    #[error("singular value spectrum is identically zero")]
    DegenerateSpectrum,

    #[error("feature covariance is ill-conditioned (smallest pivot {min_pivot:e} below floor {floor:e}); try a smaller q to select fewer features")]
    IllConditioned { min_pivot: f64, floor: f64 },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("target ARL0 {target} is not above the attainable minimum {minimum}")]
    InfeasibleTarget { target: f64, minimum: f64 },

    #[error("calibration failed at stage `{stage}`: {source}")]
    Calibration {
        stage: CalibrationStage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// The innermost error, with any calibration stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Calibration { source, .. } => source.root(),
            other => other,
        }
    }
}
