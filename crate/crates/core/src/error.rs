use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A size guard (enumeration, subset table, exact counting) was exceeded.
    #[error("size guard exceeded: {0}")]
    Size(String),

    /// Too few samples for the requested estimate.
    #[error("insufficient samples: have {available}, need at least {required}")]
    InsufficientSamples { required: u64, available: u64 },

    /// An API was driven in an order it does not allow.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("sample table: {0}")]
    Table(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
