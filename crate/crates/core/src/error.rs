use thiserror::Error;

/// Errors produced by the replay toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty structure: {0}")]
    EmptyStructure(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),
    #[error("invalid loss/priority pair: {0}")]
    InvalidPair(String),
    #[error("sum tree audit failed: {0}")]
    Audit(String),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
