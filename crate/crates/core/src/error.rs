use thiserror::Error;

/// Errors raised by the motion-primitive pipeline.
#[derive(Debug, Error)]
pub enum MpError {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown motion primitive id `{0}`")]
    UnknownId(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Malformed library, trajectory or conditions document.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported library format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MpError::InvalidInput(msg.into())
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            MpError::InvalidInput(_)
                | MpError::UnknownId(_)
                | MpError::ShapeMismatch(_)
                | MpError::Parse(_)
                | MpError::UnsupportedVersion { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, MpError>;
