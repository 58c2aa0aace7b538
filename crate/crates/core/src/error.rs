use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument is outside its valid domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Dimensions of two operands disagree.
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    /// The input is degenerate (empty, all-zero, ...).
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    /// A call violated an API contract.
    #[error("contract violation: {0}")]
    Contract(&'static str),
    /// An API was used out of order.
    #[error("usage error: {0}")]
    Usage(&'static str),
    /// A loss or gradient became non-finite during training.
    #[error("training diverged at step {step}")]
    Divergence { step: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { what, expected, got })
    }
}
