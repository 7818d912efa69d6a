//! Low-rank matrix recovery via iteratively reweighted least squares.
//!
//! The solver recovers a matrix of (approximately) minimal nuclear norm
//! consistent with affine measurements `S(X) = M` by alternating an
//! exactly-constrained weighted least-squares step with a spectral weight
//! update whose regularization level shrinks towards the (K+1)-th singular
//! value of the iterate. For entry-sampling (matrix completion) operators
//! the least-squares step decomposes column-by-column and each column is
//! solved through the Woodbury identity, so the per-column factorization
//! is only `r x r` where `r` is the current number of retained singular
//! values.
//!
//! Crate layout:
//! - [`matrix`]: dense matrices, SVD, truncation, Schatten norms.
//! - [`measure`]: measurement operators, adjoints, kernel sampling, masks.
//! - [`solver`]: the iteration, its two update paths, and stopping rules.
//! - [`analysis`]: functionals, descent monitors, guarantee calculators.
//! - [`bench`]: planted-model trials and the CSV grid runner.
//! - [`image`]: PGM I/O and grayscale image completion.
//! - [`fileio`]: matrix / mask / values text formats.
//! - [`selfcheck`]: the oracle suite behind the `check` subcommand.

pub mod analysis;
pub mod bench;
pub mod error;
pub mod fileio;
pub mod image;
pub mod matrix;
pub mod measure;
pub mod rng;
pub mod selfcheck;
pub mod solver;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use matrix::{eps_stabilize, DenseMatrix, SvdFactors};
pub use measure::{uniform_mask, MeasurementOp, MeasurementVec};
pub use solver::{
    eps_update, solve, stop_check, weight_update, x_update_completion, x_update_dense,
    IterRecord, SolverConfig, SolverPath, SolverReport, StopReason, WeightFactors,
};
