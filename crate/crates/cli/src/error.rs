use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A flag value failed validation; exit status 2.
    #[error("invalid value for {flag}: {reason}")]
    Invalid { flag: &'static str, reason: String },

    /// The configuration file is unreadable or malformed; exit status 2.
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid { .. } | CliError::Config { .. } => 2,
            CliError::Io { .. } | CliError::Runtime(_) => 1,
        }
    }
}

/// Attributes a library error to `flag`: precondition failures become
/// validation errors, anything else a runtime failure.
pub fn blame(flag: &'static str) -> impl Fn(iterint::Error) -> CliError {
    move |e| match e {
        iterint::Error::InvalidArgument { .. }
        | iterint::Error::Domain(_)
        | iterint::Error::ShapeMismatch(_)
        | iterint::Error::MemoryBudget { .. } => CliError::Invalid {
            flag,
            reason: e.to_string(),
        },
        other => CliError::Runtime(other.to_string()),
    }
}

pub fn invalid(flag: &'static str, reason: impl Into<String>) -> CliError {
    CliError::Invalid {
        flag,
        reason: reason.into(),
    }
}
