use thiserror::Error;

/// Errors produced by the library.
///
/// Precondition violations map to [`Error::InvalidArgument`] or
/// [`Error::Domain`]; the CLI turns both into exit status 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("memory budget exceeded: {entries} entries requested, limit is {limit}")]
    MemoryBudget { entries: u128, limit: u128 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
