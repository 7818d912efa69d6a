//! Linear measurement operators `S: M_{n x p} -> R^m`, their adjoints, and
//! kernel sampling.
//!
//! Two operator families are provided: dense operators given by an
//! `m x (n*p)` coefficient array acting on the column-major vectorization
//! of the matrix, and entry-sampling (completion) operators that observe a
//! subset of entries. Completion operators are separable: they act
//! column-by-column, and the measurement vector is the concatenation of
//! per-column blocks in column order, each block sorted by row index.
//!
//! Operators are immutable after construction; `apply`, `adjoint` and
//! `kernel_sample` are pure and safe to call concurrently.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{stream_rng, STREAM_GAUSSIAN_OP, STREAM_KERNEL, STREAM_MASK};

/// Measurement vector in `R^m`. For completion operators the layout is the
/// concatenation of per-column observation blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVec {
    values: Vec<f64>,
}

impl MeasurementVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("measurement vector must be nonempty".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("measurement values must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "length mismatch in dot");
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }
}

#[derive(Clone, Debug)]
enum OpKind {
    Dense {
        /// `m x (n*p)` coefficients acting on the column-major vectorization.
        coeffs: DMatrix<f64>,
    },
    Completion {
        /// Observed row indices per column, sorted ascending.
        observed: Vec<Vec<usize>>,
        /// Start of each column's block in the measurement vector.
        offsets: Vec<usize>,
    },
}

/// A linear map from `n x p` matrices to `R^m`.
#[derive(Clone, Debug)]
pub struct MeasurementOp {
    rows: usize,
    cols: usize,
    len: usize,
    kind: OpKind,
}

impl MeasurementOp {
    /// Dense operator from an explicit `m x (n*p)` coefficient matrix.
    pub fn dense(coeffs: DenseMatrix, n: usize, p: usize) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument("operator domain must be nonempty".into()));
        }
        if coeffs.cols() != n * p {
            return Err(Error::InvalidArgument(format!(
                "coefficient array has {} columns, expected n*p = {}",
                coeffs.cols(),
                n * p
            )));
        }
        let m = coeffs.rows();
        if m > n * p {
            return Err(Error::InvalidArgument(format!(
                "m = {m} exceeds the ambient dimension n*p = {}",
                n * p
            )));
        }
        Ok(Self { rows: n, cols: p, len: m, kind: OpKind::Dense { coeffs: coeffs.inner().clone() } })
    }

    /// Gaussian operator with i.i.d. entries of mean zero and variance `1/m`,
    /// drawn deterministically from `seed`.
    pub fn gaussian(n: usize, p: usize, m: usize, seed: u64) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument("operator domain must be nonempty".into()));
        }
        if m < 1 || m > n * p {
            return Err(Error::InvalidArgument(format!(
                "measurement count m = {m} must satisfy 1 <= m <= n*p = {}",
                n * p
            )));
        }
        let mut rng = stream_rng(seed, STREAM_GAUSSIAN_OP);
        let sd = (1.0 / m as f64).sqrt();
        let coeffs = DMatrix::from_fn(m, n * p, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            sd * g
        });
        Ok(Self { rows: n, cols: p, len: m, kind: OpKind::Dense { coeffs } })
    }

    /// Entry-sampling operator observing the given `(row, col)` positions.
    /// Indices must be in range and unique.
    pub fn completion(n: usize, p: usize, observed: &[(usize, usize)]) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument("operator domain must be nonempty".into()));
        }
        if observed.is_empty() {
            return Err(Error::InvalidArgument("at least one observed entry is required".into()));
        }
        let mut per_col: Vec<Vec<usize>> = vec![Vec::new(); p];
        for &(i, j) in observed {
            if i >= n || j >= p {
                return Err(Error::InvalidArgument(format!(
                    "observed index ({i}, {j}) out of range for a {n}x{p} matrix"
                )));
            }
            per_col[j].push(i);
        }
        let mut offsets = Vec::with_capacity(p);
        let mut total = 0usize;
        for col in per_col.iter_mut() {
            col.sort_unstable();
            if col.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument("duplicate observed index".into()));
            }
            offsets.push(total);
            total += col.len();
        }
        Ok(Self { rows: n, cols: p, len: total, kind: OpKind::Completion { observed: per_col, offsets } })
    }

    /// Row dimension `n` of the domain.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Column dimension `p` of the domain.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of measurements `m`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_completion(&self) -> bool {
        matches!(self.kind, OpKind::Completion { .. })
    }

    /// Observed row indices of column `j` (sorted), for completion operators.
    pub fn observed_rows(&self, j: usize) -> Option<&[usize]> {
        match &self.kind {
            OpKind::Completion { observed, .. } => observed.get(j).map(|v| v.as_slice()),
            OpKind::Dense { .. } => None,
        }
    }

    pub(crate) fn completion_parts(&self) -> Option<(&[Vec<usize>], &[usize])> {
        match &self.kind {
            OpKind::Completion { observed, offsets } => Some((observed, offsets)),
            OpKind::Dense { .. } => None,
        }
    }

    #[cfg(test)]
    pub(crate) fn dense_coeffs(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            OpKind::Dense { coeffs } => Some(coeffs),
            OpKind::Completion { .. } => None,
        }
    }

    /// Applies the operator: `S(X)`.
    pub fn apply(&self, x: &DenseMatrix) -> Result<MeasurementVec> {
        if x.rows() != self.rows || x.cols() != self.cols {
            return Err(Error::InvalidArgument(format!(
                "operator expects a {}x{} matrix, got {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        let values = match &self.kind {
            OpKind::Dense { coeffs } => {
                let vec = DVector::from_column_slice(x.as_column_major());
                (coeffs * vec).iter().copied().collect()
            }
            OpKind::Completion { observed, .. } => {
                let mut out = Vec::with_capacity(self.len);
                for (j, col) in observed.iter().enumerate() {
                    for &i in col {
                        out.push(x.get(i, j));
                    }
                }
                out
            }
        };
        Ok(MeasurementVec::from_raw(values))
    }

    /// Applies the adjoint: the unique `S*(lam)` with
    /// `<S(X), lam> = <X, S*(lam)>` for all `X`.
    pub fn adjoint(&self, lam: &MeasurementVec) -> Result<DenseMatrix> {
        if lam.len() != self.len {
            return Err(Error::InvalidArgument(format!(
                "adjoint expects a vector of length {}, got {}",
                self.len,
                lam.len()
            )));
        }
        let out = match &self.kind {
            OpKind::Dense { coeffs } => {
                let v = DVector::from_column_slice(lam.as_slice());
                let flat = coeffs.tr_mul(&v);
                DMatrix::from_column_slice(self.rows, self.cols, flat.as_slice())
            }
            OpKind::Completion { observed, .. } => {
                let mut out = DMatrix::zeros(self.rows, self.cols);
                let mut pos = 0usize;
                for (j, col) in observed.iter().enumerate() {
                    for &i in col {
                        out[(i, j)] = lam.as_slice()[pos];
                        pos += 1;
                    }
                }
                out
            }
        };
        Ok(DenseMatrix::from_inner(out))
    }

    /// Draws a nonzero element of `ker S` by projecting a seeded Gaussian
    /// matrix `Z` onto the kernel: `H = Z - S*((S S*)^{-1} S(Z))`.
    pub fn kernel_sample(&self, seed: u64) -> Result<DenseMatrix> {
        if self.len >= self.rows * self.cols {
            return Err(Error::NoKernel);
        }
        let mut rng = stream_rng(seed, STREAM_KERNEL);
        let z = DenseMatrix::from_fn(self.rows, self.cols, |_, _| StandardNormal.sample(&mut rng))
            .expect("finite by construction");
        let sz = self.apply(&z)?;
        match &self.kind {
            OpKind::Completion { .. } => {
                // S S* = I: projection just zeroes the observed entries.
                let correction = self.adjoint(&sz)?;
                Ok(&z - &correction)
            }
            OpKind::Dense { coeffs } => {
                let gram = coeffs * coeffs.transpose();
                let chol = Cholesky::new(gram).ok_or_else(|| {
                    Error::IllPosed("operator rows are linearly dependent".into())
                })?;
                let lam = chol.solve(&DVector::from_column_slice(sz.as_slice()));
                let correction = self.adjoint(&MeasurementVec::from_raw(lam.iter().copied().collect()))?;
                Ok(&z - &correction)
            }
        }
    }

    /// Materializes the operator as its dense coefficient array. Mostly
    /// useful for cross-checking the two variants against each other.
    pub fn to_dense(&self) -> Result<Self> {
        match &self.kind {
            OpKind::Dense { .. } => Ok(self.clone()),
            OpKind::Completion { observed, .. } => {
                let mut coeffs = DMatrix::zeros(self.len, self.rows * self.cols);
                let mut row = 0usize;
                for (j, col) in observed.iter().enumerate() {
                    for &i in col {
                        coeffs[(row, j * self.rows + i)] = 1.0;
                        row += 1;
                    }
                }
                Ok(Self { rows: self.rows, cols: self.cols, len: self.len, kind: OpKind::Dense { coeffs } })
            }
        }
    }

    /// Reorders values given as `(row, col) -> value` pairs into this
    /// completion operator's block layout.
    pub fn vec_from_pairs(&self, pairs: &[(usize, usize)], values: &[f64]) -> Result<MeasurementVec> {
        let (observed, offsets) = self
            .completion_parts()
            .ok_or_else(|| Error::InvalidArgument("pair layout applies to completion operators".into()))?;
        if pairs.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} positions but {} values",
                pairs.len(),
                values.len()
            )));
        }
        if pairs.len() != self.len {
            return Err(Error::InvalidArgument(format!(
                "operator observes {} entries but {} pairs were given",
                self.len,
                pairs.len()
            )));
        }
        let mut out = vec![f64::NAN; self.len];
        for (&(i, j), &v) in pairs.iter().zip(values) {
            if i >= self.rows || j >= self.cols {
                return Err(Error::InvalidArgument(format!("position ({i}, {j}) out of range")));
            }
            let col = &observed[j];
            let k = col
                .binary_search(&i)
                .map_err(|_| Error::InvalidArgument(format!("position ({i}, {j}) is not observed")))?;
            out[offsets[j] + k] = v;
        }
        if out.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("values do not cover every observed entry".into()));
        }
        MeasurementVec::new(out)
    }
}

/// Samples exactly `floor(fraction * n * p)` distinct positions uniformly
/// without replacement, deterministically from `seed`.
pub fn uniform_mask(n: usize, p: usize, fraction: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let total = n * p;
    let m = ((fraction * total as f64).floor() as usize).min(total);
    if m == 0 {
        return Err(Error::InvalidArgument("sampling fraction selects zero entries".into()));
    }
    let mut rng = stream_rng(seed, STREAM_MASK);
    let mut indices: Vec<usize> = (0..total).collect();
    // Partial Fisher-Yates: the first m slots end up uniform without replacement.
    for i in 0..m {
        let j = rand::Rng::random_range(&mut rng, i..total);
        indices.swap(i, j);
    }
    Ok(indices[..m].iter().map(|&idx| (idx % n, idx / n)).collect())
}
