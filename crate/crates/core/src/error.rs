use thiserror::Error;

/// Errors raised by the planning toolkit.
#[derive(Debug, Error)]
pub enum IcvarError {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration or environment spec failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A computation exceeded its resource cap (enumeration size, numeric range).
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IcvarError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        IcvarError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        IcvarError::Config(msg.into())
    }
}

pub type Result<T, E = IcvarError> = std::result::Result<T, E>;
