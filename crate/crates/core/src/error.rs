use thiserror::Error;

/// Errors raised by the simulator and the numerical engine.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numerical routine could not reach its tolerance.
    #[error("numerical diagnostic: {0}")]
    Diagnostic(String),

    /// Invalid experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested regime cannot be reproduced at desk scale.
    #[error("infeasible regime: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn diagnostic(msg: impl Into<String>) -> Error {
    Error::Diagnostic(msg.into())
}
