use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the range where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A bit source ran dry. Never wraps around.
    #[error("entropy exhausted after {consumed} bits")]
    EntropyExhausted { consumed: u64 },

    #[error("no fair operating point: {0}")]
    Infeasible(String),

    #[error("empty statistics: {0}")]
    EmptyStats(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}
