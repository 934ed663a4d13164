use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("stereographic projection is singular at the north pole")]
    PoleSingularity,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("precision budget exceeded: {0}")]
    PrecisionBudgetExceeded(String),
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),
    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
