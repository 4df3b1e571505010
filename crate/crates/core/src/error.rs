use thiserror::Error;

/// Failure categories shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A hypothesis of the boundedness theorem (or of the averaging scheme) fails.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate frequency map: {0}")]
    Degeneracy(String),

    #[error("normal-form step {step} failed: {reason}")]
    StepFailure { step: usize, reason: String },

    #[error("twist condition lost: {0}")]
    TwistLoss(String),

    #[error("rotation number undefined: {0}")]
    UndefinedRotation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
