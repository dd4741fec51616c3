//! Crate-wide error type.

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav: {0}")]
    Wav(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("attack: {0}")]
    Attack(String),
    #[error("training diverged: {0}")]
    Diverged(String),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage/config problems, 3 for
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Wav(_)
            | Error::Shape(_)
            | Error::Invalid(_)
            | Error::Config(_)
            | Error::Attack(_) => 2,
            Error::Io(_) | Error::Checkpoint(_) | Error::Diverged(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
