use alloc::string::String;

/// Errors raised by the core numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("matrix is not symmetric ({0})")]
    NotSymmetric(&'static str),
    #[error("degenerate least-squares design: rank deficient with zero ridge")]
    DegenerateDesign,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty replay buffer")]
    EmptyBuffer,
    #[error("solver diverged after {iterations} iterations (last cost {last_cost})")]
    Divergence { iterations: usize, last_cost: f64 },
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("quadrature failure: {0}")]
    Quadrature(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
