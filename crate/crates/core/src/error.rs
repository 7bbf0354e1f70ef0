use thiserror::Error;

/// Errors raised across the codec.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The elementwise product of two tensors vanished everywhere.
    #[error("contradictory evidence: normalized product has zero mass")]
    Contradiction,

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid chain: {0}")]
    Chain(String),

    #[error("block length {0} is not a power of two >= 2")]
    BlockLength(usize),

    #[error("buffer pool exhausted at level {level} (capacity {capacity})")]
    Capacity { level: usize, capacity: usize },

    #[error("unsupported chain: {0}")]
    UnsupportedChain(String),

    #[error("internal state error: {0}")]
    InternalState(String),

    #[error("enumeration space {0} exceeds the oracle guard")]
    OracleGuard(u128),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
