//! Error taxonomy shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a basic precondition (non-finite entries, bad shape).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A parameter is outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The linear system defining the update has no unique solution
    /// (typically a non-surjective measurement operator).
    #[error("ill-posed system: {0}")]
    IllPosed(String),
    /// A factorization or iteration failed beyond recovery.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    /// The measurement operator has a trivial kernel (m = n*p), so no
    /// kernel element can be sampled.
    #[error("operator has trivial kernel (m = n*p)")]
    NoKernel,
    /// A theoretical formula was evaluated outside the regime where it holds.
    #[error("outside admissible regime: {0}")]
    OutOfRegime(String),
    /// A file or byte stream does not conform to its declared format.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
