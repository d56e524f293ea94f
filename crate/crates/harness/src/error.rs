use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Core(#[from] vattention::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code: 2 for anything touching the filesystem, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use vattention::Error as E;
        match self {
            HarnessError::Io(_) | HarnessError::Csv(_) => 2,
            HarnessError::Core(
                E::Io(_) | E::BadMagic(_) | E::UnsupportedVersion(_) | E::TruncatedFile { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::InvalidSpec(msg.into())
}
