use thiserror::Error;

/// Error taxonomy shared across the crate.
#[derive(Error, Debug)]
pub enum Error {
    /// A configuration value violates its documented constraints.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    /// A runtime input (batch, label, shape) violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// An object was used before it was built/trained.
    #[error("lifecycle: {0}")]
    Lifecycle(String),
    /// A computation produced non-finite or otherwise unusable values.
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("image: {0}")]
    Image(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
