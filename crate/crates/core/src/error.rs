use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A simulated state became non-finite.
    #[error("sample diverged at step {step}")]
    Diverged { step: usize },
    /// Inconsistent experiment configuration (levels, divisibility, sizes).
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
