use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not orthogonal (max |UᵀU - I| = {deviation:e})")]
    InvalidRotation { deviation: f64 },

    #[error("linear system is rank deficient or ill-conditioned ({detail})")]
    RankDeficient { detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{routine} did not converge after {iterations} iterations")]
    IterationFailure {
        routine: &'static str,
        iterations: usize,
    },

    #[error("integration diverged at t = {t}")]
    IntegrationDiverged { t: f64 },

    #[error("closed form has no valid branch on coordinate {coordinate}: {detail}")]
    Branch { coordinate: usize, detail: String },

    #[error("numeric consistency check failed: {0}")]
    NumericConsistency(String),

    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<Error> },

    #[error("rotation {rotation}: {source}")]
    Training { rotation: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
