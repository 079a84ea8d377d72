use thiserror::Error;

/// Errors surfaced by the engine.
///
/// `Structural` covers shape/parent mismatches that indicate a caller bug;
/// `Precondition` covers violated mathematical hypotheses (e.g. feeding a
/// non-Frobenius triple to `specialize`); `Numerical` signals that a
/// computation produced data outside its proven range (negative Gram
/// eigenvalues, singular positive parts), which means the input was broken
/// upstream rather than that a fallback should run.
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
