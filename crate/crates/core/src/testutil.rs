//! Shared helpers for unit tests.

use rand_distr::{Distribution, StandardNormal};

use crate::matrix::{self, DenseMatrix};
use crate::rng::stream_rng;

pub(crate) fn random_matrix(n: usize, p: usize, seed: u64) -> DenseMatrix {
    let mut rng = stream_rng(seed, 9_000);
    DenseMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng)).unwrap()
}

pub(crate) fn random_orthogonal_seeded(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = stream_rng(seed, 9_001);
    matrix::random_orthogonal(n, &mut rng)
}

/// Relative Frobenius distance, guarded against a zero reference.
pub(crate) fn rel_frob(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm().max(1e-300)
}
