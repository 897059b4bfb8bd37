use thiserror::Error;

/// Errors raised by the library. [`Error::kind`] gives the short stable tag
/// used in reports and CLI diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape: {0}")]
    Shape(String),
    #[error("too-large: {0}")]
    TooLarge(String),
    #[error("not-unitary: |U^H U - I| = {0:e}")]
    NotUnitary(f64),
    #[error("empty-join: at least one structure is required")]
    EmptyJoin,
    #[error("invalid-state: {0}")]
    InvalidState(String),
    #[error("invalid-algebra: {0}")]
    InvalidAlgebra(String),
    #[error("invalid-input: {0}")]
    InvalidInput(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::TooLarge(_) => "too-large",
            Error::NotUnitary(_) => "not-unitary",
            Error::EmptyJoin => "empty-join",
            Error::InvalidState(_) => "invalid-state",
            Error::InvalidAlgebra(_) => "invalid-algebra",
            Error::InvalidInput(_) => "invalid-input",
            Error::Internal(_) => "internal",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
