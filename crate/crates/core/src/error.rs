use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration over 2^{n_sites} configurations exceeds the cap of 2^{cap}")]
    EnumerationCap { n_sites: usize, cap: usize },

    #[error("instance has {clauses} clauses, above the cap of {cap}")]
    ClauseCap { clauses: u64, cap: u64 },

    #[error("population sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
