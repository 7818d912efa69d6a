//! Dense real matrices and the spectral kernel: SVD, spectral truncation,
//! singular-value stabilization, and Schatten norms.
//!
//! Entries are stored column-major. Values are immutable once constructed
//! and every operation is a pure function, so matrices can be shared and
//! sent across threads freely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense `rows x cols` matrix of finite `f64` entries, column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from column-major data. Fails on empty dimensions,
    /// a length mismatch, or non-finite entries.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        let inner = DMatrix::from_vec(rows, cols, data);
        Self::from_inner_checked(inner)
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        let inner = DMatrix::from_fn(rows, cols, |i, j| data[i * cols + j]);
        Self::from_inner_checked(inner)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(rows, cols)?;
        Self::from_inner_checked(DMatrix::from_fn(rows, cols, f))
    }

    /// Square diagonal matrix with the given diagonal.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        check_dims(n, n)?;
        Self::from_inner_checked(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self { inner: DMatrix::zeros(rows, cols) }
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "matrix dimensions must be positive");
        Self { inner: DMatrix::identity(n, n) }
    }

    pub(crate) fn from_inner(inner: DMatrix<f64>) -> Self {
        Self { inner }
    }

    fn from_inner_checked(inner: DMatrix<f64>) -> Result<Self> {
        if !inner.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Self { inner })
    }

    pub(crate) fn inner(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    pub fn is_finite(&self) -> bool {
        self.inner.iter().all(|x| x.is_finite())
    }

    /// Entries in column-major order.
    pub fn as_column_major(&self) -> &[f64] {
        self.inner.as_slice()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let (n, p) = (self.rows(), self.cols());
        let mut out = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self { inner: self.inner.transpose() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { inner: &self.inner * s }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Frobenius inner product `<self, other> = sum_ij a_ij b_ij`.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.rows(), other.rows(), "shape mismatch in dot");
        assert_eq!(self.cols(), other.cols(), "shape mismatch in dot");
        self.inner.dot(&other.inner)
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Singular value decomposition `X = U diag(sigma) V^T`.
    ///
    /// `U` is `n x k` and `V` is `p x k` with orthonormal columns,
    /// `k = min(n, p)`, and `sigma` is nonincreasing. The factorization is
    /// deterministic: singular values are sorted and the sign of each left
    /// singular vector is fixed so its largest-magnitude entry (first such
    /// index on ties) is positive.
    pub fn svd(&self) -> Result<SvdFactors> {
        if !self.is_finite() {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        let (n, p) = (self.rows(), self.cols());
        let k = n.min(p);
        let svd = self
            .inner
            .clone()
            .try_svd(true, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::NumericalFailure("SVD iteration did not converge".into()))?;
        let mut u = svd.u.expect("left factor requested");
        let v_t = svd.v_t.expect("right factor requested");
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut u_sorted = DMatrix::zeros(n, k);
        let mut v_sorted = DMatrix::zeros(p, k);
        let mut sigma = Vec::with_capacity(k);
        for (dst, &src) in order.iter().enumerate() {
            u_sorted.set_column(dst, &u.column(src));
            v_sorted.set_column(dst, &v_t.row(src).transpose());
            sigma.push(svd.singular_values[src]);
        }
        u = u_sorted;
        let mut v = v_sorted;
        fix_signs(&mut u, &mut v);
        Ok(SvdFactors {
            u: DenseMatrix::from_inner(u),
            sigma,
            v: DenseMatrix::from_inner(v),
        })
    }

    /// Singular values only, nonincreasing.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        if !self.is_finite() {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        let mut sv: Vec<f64> = self.inner.clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(sv)
    }

    /// Schatten q-norm: the l_q norm of the singular value vector.
    /// `q = 1` is the nuclear norm, `q = 2` the Frobenius norm and
    /// `q = f64::INFINITY` the operator norm. Requires `q >= 1`.
    pub fn schatten_norm(&self, q: f64) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::InvalidArgument(format!("Schatten norm requires q >= 1, got {q}")));
        }
        let sigma = self.singular_values()?;
        if q.is_infinite() {
            return Ok(sigma[0]);
        }
        Ok(sigma.iter().map(|s| s.powf(q)).sum::<f64>().powf(1.0 / q))
    }

    /// Nuclear norm, the sum of singular values.
    pub fn nuclear_norm(&self) -> Result<f64> {
        self.schatten_norm(1.0)
    }

    /// Best rank-k approximation error in the nuclear norm: the tail sum
    /// `sigma_{k+1} + ... + sigma_min(n,p)`, attained by spectral truncation.
    pub fn best_k_error(&self, k: usize) -> Result<f64> {
        let sigma = self.singular_values()?;
        if k > sigma.len() {
            return Err(Error::InvalidArgument(format!(
                "rank {k} out of range for a {}x{} matrix",
                self.rows(),
                self.cols()
            )));
        }
        Ok(sigma[k..].iter().sum())
    }
}

impl std::ops::Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_inner(&self.inner + &rhs.inner)
    }
}

impl std::ops::Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_inner(&self.inner - &rhs.inner)
    }
}

impl std::ops::Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_inner(&self.inner * &rhs.inner)
    }
}

/// SVD factors `(U, sigma, V)` with `U^T U = I`, `V^T V = I` and
/// `U diag(sigma) V^T` reproducing the decomposed matrix.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    u: DenseMatrix,
    sigma: Vec<f64>,
    v: DenseMatrix,
}

impl SvdFactors {
    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    /// Singular values, nonincreasing; length `min(n, p)`.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.truncate(self.sigma.len()).expect("full truncation is in range")
    }

    /// k-spectral truncation: zero all singular values past index `k`,
    /// yielding the best rank-k approximation. `k = 0` gives the zero matrix.
    pub fn truncate(&self, k: usize) -> Result<DenseMatrix> {
        if k > self.sigma.len() {
            return Err(Error::InvalidArgument(format!(
                "truncation rank {k} exceeds min(n, p) = {}",
                self.sigma.len()
            )));
        }
        let (n, p) = (self.u.rows(), self.v.rows());
        let mut out = DMatrix::zeros(n, p);
        for j in 0..k {
            let uj = self.u.inner.column(j);
            let vj = self.v.inner.column(j);
            out.gemm(self.sigma[j], &uj, &vj.transpose(), 1.0);
        }
        Ok(DenseMatrix::from_inner(out))
    }
}

/// Componentwise stabilization `sigma_j -> max(sigma_j, eps)`.
///
/// Expects a nonincreasing, nonnegative vector; the output is again
/// nonincreasing. `eps` must be nonnegative.
pub fn eps_stabilize(sigma: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("stabilization level must be >= 0, got {eps}")));
    }
    Ok(sigma.iter().map(|&s| s.max(eps)).collect())
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "matrix dimensions must be positive, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Draws a Haar-ish random orthogonal matrix as the Q factor of a random
/// Gaussian matrix.
pub(crate) fn random_orthogonal(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> DenseMatrix {
    use rand_distr::{Distribution, StandardNormal};
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    DenseMatrix::from_inner(g.qr().q())
}

/// Flips singular vector pairs so the largest-magnitude entry of each left
/// vector is positive; the first index wins ties.
fn fix_signs(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        let col = u.column(j);
        let mut best = 0usize;
        let mut best_abs = col[0].abs();
        for (i, &x) in col.iter().enumerate().skip(1) {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selfcheck::oracle;
    use crate::testutil::{random_matrix, random_orthogonal_seeded, rel_frob};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            DenseMatrix::from_row_major(1, 2, &[1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(DenseMatrix::from_column_major(0, 2, vec![]).is_err());
    }

    #[test]
    fn svd_identity() {
        let x = DenseMatrix::identity(2);
        let f = x.svd().unwrap();
        assert_eq!(f.sigma(), &[1.0, 1.0]);
    }

    #[test]
    fn svd_diag_rank_one() {
        let x = DenseMatrix::from_diagonal(&[3.0, 0.0]).unwrap();
        let f = x.svd().unwrap();
        assert!((f.sigma()[0] - 3.0).abs() < 1e-12);
        assert!(f.sigma()[1].abs() < 1e-12);
    }

    #[test]
    fn svd_recomposes_and_matches_gram_eigenvalues() {
        let x = random_matrix(5, 4, 1);
        let f = x.svd().unwrap();
        assert!(rel_frob(&f.reconstruct(), &x) < 1e-10);

        // Independent route: sigma_i^2 are the eigenvalues of X X^T,
        // computed with the Jacobi eigensolver.
        let gram = &x * &x.transpose();
        let (eigs, _) = oracle::jacobi_eigen_symmetric(&gram);
        for (i, &s) in f.sigma().iter().enumerate() {
            assert!(
                (s * s - eigs[i]).abs() <= 1e-10 * eigs[0].max(1.0),
                "sigma_{i}^2 = {} vs eigenvalue {}",
                s * s,
                eigs[i]
            );
        }
    }

    #[test]
    fn svd_orthonormal_factors() {
        for (n, p, seed) in [(5, 4, 2), (4, 7, 3), (6, 6, 4)] {
            let x = random_matrix(n, p, seed);
            let f = x.svd().unwrap();
            let k = n.min(p);
            let utu = &f.u().transpose() * f.u();
            let vtv = &f.v().transpose() * f.v();
            let id = DenseMatrix::identity(k);
            let tol = 1e-10 * n.max(p) as f64;
            assert!((&utu - &id).max_abs() < tol);
            assert!((&vtv - &id).max_abs() < tol);
        }
    }

    #[test]
    fn svd_is_deterministic() {
        let x = random_matrix(6, 5, 5);
        let a = x.svd().unwrap();
        let b = x.svd().unwrap();
        assert_eq!(a.u(), b.u());
        assert_eq!(a.v(), b.v());
        assert_eq!(a.sigma(), b.sigma());
    }

    #[test]
    fn truncate_diagonal() {
        let x = DenseMatrix::from_diagonal(&[3.0, 2.0, 1.0]).unwrap();
        let t = x.svd().unwrap().truncate(2).unwrap();
        let expected = DenseMatrix::from_diagonal(&[3.0, 2.0, 0.0]).unwrap();
        assert!((&t - &expected).max_abs() < 1e-12);
    }

    #[test]
    fn truncate_zero_and_out_of_range() {
        let x = random_matrix(4, 3, 6);
        let f = x.svd().unwrap();
        assert!(f.truncate(0).unwrap().max_abs() == 0.0);
        assert!(f.truncate(4).is_err());
    }

    #[test]
    fn truncation_error_is_tail_sum() {
        let x = random_matrix(5, 5, 7);
        let f = x.svd().unwrap();
        let t1 = f.truncate(1).unwrap();
        let gap = (&x - &t1).nuclear_norm().unwrap();
        let tail: f64 = f.sigma()[1..].iter().sum();
        assert!((gap - tail).abs() < 1e-9 * tail);
    }

    #[test]
    fn eps_stabilize_examples() {
        assert_eq!(eps_stabilize(&[3.0, 0.5], 1.0).unwrap(), vec![3.0, 1.0]);
        assert_eq!(eps_stabilize(&[3.0, 0.5], 0.0).unwrap(), vec![3.0, 0.5]);
        assert_eq!(eps_stabilize(&[0.0, 0.0], 0.2).unwrap(), vec![0.2, 0.2]);
        assert!(eps_stabilize(&[1.0], -0.1).is_err());
    }

    #[test]
    fn schatten_norm_examples() {
        let x = DenseMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        assert!((x.schatten_norm(1.0).unwrap() - 6.0).abs() < 1e-12);

        // Orthogonal matrix: nuclear norm n, operator norm 1.
        let q = random_orthogonal_seeded(4, 8);
        assert!((q.schatten_norm(1.0).unwrap() - 4.0).abs() < 1e-10);
        assert!((q.schatten_norm(f64::INFINITY).unwrap() - 1.0).abs() < 1e-10);

        assert!(x.schatten_norm(0.5).is_err());
    }

    #[test]
    fn schatten_two_matches_entrywise_frobenius() {
        let x = random_matrix(6, 4, 9);
        let via_sigma = x.schatten_norm(2.0).unwrap();
        let entrywise: f64 = x.as_column_major().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((via_sigma - entrywise).abs() < 1e-10 * entrywise);
    }

    #[test]
    fn best_k_error_cases() {
        let x = DenseMatrix::from_diagonal(&[3.0, 2.0, 1.0]).unwrap();
        assert!((x.best_k_error(1).unwrap() - 3.0).abs() < 1e-12);

        let f = random_matrix(6, 3, 10).svd().unwrap();
        let rank2 = f.truncate(2).unwrap();
        assert!(rank2.best_k_error(2).unwrap() < 1e-10);
        assert!(rank2.best_k_error(4).is_err());
    }

    #[test]
    fn best_k_error_lower_bounds_random_candidates() {
        // No random rank-2 candidate may beat the spectral truncation.
        let x = random_matrix(5, 5, 11);
        let rho = x.best_k_error(2).unwrap();
        let mut rng = crate::rng::stream_rng(12, 99);
        for _ in 0..200 {
            let a = DenseMatrix::from_fn(5, 2, |_, _| StandardNormal.sample(&mut rng)).unwrap();
            let b = DenseMatrix::from_fn(2, 5, |_, _| StandardNormal.sample(&mut rng)).unwrap();
            let scale: f64 = rng.random_range(0.1..2.0);
            let z = (&a * &b).scale(scale);
            let dist = (&x - &z).nuclear_norm().unwrap();
            assert!(dist >= rho - 1e-9);
        }
    }
}
