use thiserror::Error;

/// Errors raised by the rate engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument fell outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field failed validation.
    #[error("invalid configuration: {field}: {message}")]
    InvalidConfig { field: String, message: String },

    /// A requested simulation exceeds the configured resource cap.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A root-finding bracket does not straddle a sign change.
    #[error("bracket error: {0}")]
    Bracket(String),

    /// Malformed input document.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
