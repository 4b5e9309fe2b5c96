use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Malformed input: dimension mismatch, unknown symbol, bad derivation step.
    #[error("structural error: {0}")]
    Structural(String),
    /// A documented precondition of the operation does not hold.
    #[error("contract error: {0}")]
    Contract(String),
    /// A search ran out of its configured budget.
    #[error("budget exhausted: {0}")]
    Budget(String),
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structural<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Structural(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
