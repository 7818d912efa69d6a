//! Iteratively reweighted least squares for low-rank recovery.
//!
//! Each iteration solves the weighted least-squares problem
//! `min ||W^{1/2} X||_F^2  s.t.  S(X) = M`, shrinks the regularization
//! level `eps` towards the (K+1)-th singular value of the iterate, and
//! rebuilds the weight from the spectrum stabilized at `eps`. Constraints
//! are enforced exactly at every iterate.
//!
//! Two update paths compute the same minimizer: a general dense path that
//! factors the `m x m` normal system, and a completion path that exploits
//! separability to solve one small system per column, using the Woodbury
//! identity so the only factorization is `r x r` (`r` = number of singular
//! values above `eps`). Per-column solves are independent and run in
//! parallel; results do not depend on scheduling order.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::measure::{MeasurementOp, MeasurementVec};
use crate::rng::{stream_rng, STREAM_SUBSPACE};

/// Largest `min(n, p)` for which the weight update computes a full SVD;
/// above this a partial spectrum is extracted by block subspace iteration.
const FULL_SVD_MAX_DIM: usize = 256;

/// Sweep cap for the block subspace iteration before falling back to a
/// full decomposition.
const MAX_SUBSPACE_SWEEPS: usize = 200;

/// Which X-update implementation a solve should use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverPath {
    /// Woodbury path for completion operators, dense path otherwise.
    Auto,
    /// Always factor the m x m normal system.
    Dense,
    /// Per-column Woodbury updates; requires a completion operator.
    Woodbury,
}

/// Configuration of a solve run.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Target rank `K`; the regularization level tracks `sigma_{K+1}`.
    pub target_rank: usize,
    /// Shrinkage factor applied to `sigma_{K+1}` in the eps update.
    pub gamma: f64,
    /// Hard iteration cap.
    pub max_iter: usize,
    /// Relative eps change below which an iteration counts as stalled.
    pub eps_stall_tol: f64,
    /// Number of consecutive stalled iterations that must be exceeded to stop.
    pub eps_stall_len: usize,
    pub path: SolverPath,
}

impl SolverConfig {
    pub fn new(target_rank: usize) -> Self {
        Self {
            target_rank,
            gamma: 1.0,
            max_iter: 200,
            eps_stall_tol: 1e-6,
            eps_stall_len: 50,
            path: SolverPath::Auto,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_stall(mut self, tol: f64, len: usize) -> Self {
        self.eps_stall_tol = tol;
        self.eps_stall_len = len;
        self
    }

    pub fn with_path(mut self, path: SolverPath) -> Self {
        self.path = path;
        self
    }

    fn validate(&self, min_dim: usize) -> Result<()> {
        if self.target_rank < 1 || self.target_rank >= min_dim {
            return Err(Error::InvalidArgument(format!(
                "target rank K = {} must satisfy 1 <= K < min(n, p) = {min_dim}",
                self.target_rank
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.eps_stall_tol >= 0.0) {
            return Err(Error::InvalidArgument("eps stall tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Factored spectral weight
/// `W = eps^{-1} I + U_r diag(1/sigma_j - 1/eps) U_r^T`
/// with `sigma_j > eps` for all retained values, so that
/// `W^{-1} = eps I + U_r diag(sigma_j - eps) U_r^T`.
#[derive(Clone, Debug)]
pub struct WeightFactors {
    eps: f64,
    sigma_r: Vec<f64>,
    u_r: DMatrix<f64>,
    dim: usize,
}

impl WeightFactors {
    /// `W = eps^{-1} I` (no spectral part).
    pub fn isotropic(dim: usize, eps: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("weight dimension must be positive".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { eps, sigma_r: Vec::new(), u_r: DMatrix::zeros(dim, 0), dim })
    }

    /// The identity weight used to initialize a solve.
    pub fn identity(dim: usize) -> Self {
        Self::isotropic(dim, 1.0).expect("eps = 1 is valid")
    }

    /// Builds factors from an explicit orthonormal basis and its singular
    /// values; every `sigma_r[j]` must exceed `eps`.
    pub fn new(eps: f64, u_r: &DenseMatrix, sigma_r: &[f64]) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        if u_r.cols() != sigma_r.len() {
            return Err(Error::InvalidArgument(format!(
                "{} basis columns but {} singular values",
                u_r.cols(),
                sigma_r.len()
            )));
        }
        if sigma_r.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("singular values must be nonincreasing".into()));
        }
        if sigma_r.iter().any(|&s| !(s > eps)) {
            return Err(Error::InvalidArgument("retained singular values must exceed eps".into()));
        }
        let inner = u_r.inner();
        let gram = inner.tr_mul(inner);
        let id = DMatrix::identity(sigma_r.len(), sigma_r.len());
        if (gram - id).amax() > 1e-10 {
            return Err(Error::InvalidInput("basis columns are not orthonormal".into()));
        }
        Ok(Self { eps, sigma_r: sigma_r.to_vec(), u_r: inner.clone(), dim: u_r.rows() })
    }

    fn from_spectrum(spectrum: &Spectrum, eps: f64, r: usize, dim: usize) -> Self {
        Self {
            eps,
            sigma_r: spectrum.sigma[..r].to_vec(),
            u_r: spectrum.u.columns(0, r).into_owned(),
            dim,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Number of singular values strictly above `eps`.
    pub fn rank(&self) -> usize {
        self.sigma_r.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma_r(&self) -> &[f64] {
        &self.sigma_r
    }

    /// `trace(W^{-1}) = (dim - r) eps + sum sigma_r`, which also equals
    /// `||W^{-1/2}||_F^2`.
    pub fn w_inv_trace(&self) -> f64 {
        (self.dim - self.rank()) as f64 * self.eps + self.sigma_r.iter().sum::<f64>()
    }

    /// `W X` without densifying the weight.
    pub fn apply_w(&self, x: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_inner(self.apply_w_mat(x.inner()))
    }

    /// `W^{-1} X` without densifying the weight.
    pub fn apply_w_inv(&self, x: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_inner(self.apply_w_inv_mat(x.inner()))
    }

    fn apply_w_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim, "weight dimension mismatch");
        let mut out = x * (1.0 / self.eps);
        if !self.sigma_r.is_empty() {
            let mut proj = self.u_r.tr_mul(x);
            for (l, &s) in self.sigma_r.iter().enumerate() {
                let c = 1.0 / s - 1.0 / self.eps;
                proj.row_mut(l).scale_mut(c);
            }
            out.gemm(1.0, &self.u_r, &proj, 1.0);
        }
        out
    }

    fn apply_w_inv_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim, "weight dimension mismatch");
        let mut out = x * self.eps;
        if !self.sigma_r.is_empty() {
            let mut proj = self.u_r.tr_mul(x);
            for (l, &s) in self.sigma_r.iter().enumerate() {
                proj.row_mut(l).scale_mut(s - self.eps);
            }
            out.gemm(1.0, &self.u_r, &proj, 1.0);
        }
        out
    }

    /// Densifies `W`; intended for small sizes and cross-checks.
    pub fn to_dense(&self) -> DenseMatrix {
        let id = DMatrix::identity(self.dim, self.dim);
        DenseMatrix::from_inner(self.apply_w_mat(&id))
    }

    pub(crate) fn u_r_mat(&self) -> &DMatrix<f64> {
        &self.u_r
    }
}

/// Why a solve stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// `eps` reached exactly zero; the final iterate has rank at most `K`.
    EpsZero,
    /// The iteration cap was reached.
    MaxIter,
    /// The relative eps change stayed below tolerance for more than
    /// `eps_stall_len` consecutive iterations.
    EpsStalled,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::EpsZero => "eps_zero",
            StopReason::MaxIter => "max_iter",
            StopReason::EpsStalled => "eps_stalled",
        };
        f.write_str(s)
    }
}

/// Per-iteration trace record.
#[derive(Clone, Debug)]
pub struct IterRecord {
    /// Value of the weighted functional at this iterate (see the analysis
    /// module); nonincreasing along the run.
    pub j_value: f64,
    /// Regularization level after the eps update; nonincreasing.
    pub eps: f64,
    /// Number of singular values above `eps`.
    pub rank_above_eps: usize,
    /// `||X^l - X^{l-1}||_F`; for the first iterate, `||X^1||_F`.
    pub step_frobenius: f64,
    /// Wall-clock seconds spent on this iteration.
    pub wall_secs: f64,
    /// `trace(W^{-1})` for the weight built at this iterate.
    pub w_inv_trace: f64,
    /// Nuclear norm of the iterate (sum of the computed singular values;
    /// a lower bound when the spectrum was computed partially).
    pub nuclear_norm: f64,
}

/// Outcome of a solve: final iterate, stop reason, and the full trace.
#[derive(Clone, Debug)]
pub struct SolverReport {
    pub x_final: DenseMatrix,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub trace: Vec<IterRecord>,
}

/// `eps_l = min(eps_{l-1}, gamma * sigma_{K+1}(X^l))`; nonincreasing by
/// construction, and zero exactly when the iterate has numerical rank <= K.
pub fn eps_update(eps_prev: f64, gamma: f64, sigma_k_plus_1: f64) -> f64 {
    debug_assert!(eps_prev >= 0.0 && gamma > 0.0 && sigma_k_plus_1 >= 0.0);
    eps_prev.min(gamma * sigma_k_plus_1)
}

/// Evaluates the stopping rule on a trace: stop immediately when `eps`
/// hits zero, at the iteration cap, or once the relative eps change stays
/// within `eps_stall_tol` for more than `eps_stall_len` consecutive
/// iterations.
pub fn stop_check(trace: &[IterRecord], cfg: &SolverConfig) -> Option<StopReason> {
    let last = trace.last()?;
    if last.eps == 0.0 {
        return Some(StopReason::EpsZero);
    }
    if trace.len() >= cfg.max_iter {
        return Some(StopReason::MaxIter);
    }
    let mut stalled = 0usize;
    for w in trace.windows(2).rev() {
        let (prev, cur) = (w[0].eps, w[1].eps);
        if cur > 0.0 && (cur - prev).abs() / cur <= cfg.eps_stall_tol {
            stalled += 1;
        } else {
            break;
        }
    }
    if stalled > cfg.eps_stall_len {
        return Some(StopReason::EpsStalled);
    }
    None
}

/// Runs the full iteration until a stopping rule fires.
pub fn solve(op: &MeasurementOp, m: &MeasurementVec, cfg: &SolverConfig) -> Result<SolverReport> {
    let (n, p) = (op.rows(), op.cols());
    let min_dim = n.min(p);
    cfg.validate(min_dim)?;
    if m.len() != op.len() {
        return Err(Error::InvalidArgument(format!(
            "operator yields {} measurements but the data vector has {}",
            op.len(),
            m.len()
        )));
    }
    let use_woodbury = match cfg.path {
        SolverPath::Auto => op.is_completion(),
        SolverPath::Dense => false,
        SolverPath::Woodbury => {
            if !op.is_completion() {
                return Err(Error::InvalidArgument(
                    "the Woodbury path requires an entry-sampling operator".into(),
                ));
            }
            true
        }
    };

    let mut weights = WeightFactors::identity(n);
    let mut eps = 1.0f64;
    let mut x_prev: Option<DenseMatrix> = None;
    let mut trace: Vec<IterRecord> = Vec::new();

    let stop_reason = loop {
        let tick = Instant::now();
        let x = if use_woodbury {
            x_update_completion(op, m, &weights)?
        } else {
            x_update_dense(op, m, &weights)?
        };
        if !x.is_finite() {
            return Err(Error::NumericalFailure("iterate contains non-finite entries".into()));
        }

        let hint = (cfg.target_rank + 1).max(weights.rank()) + 8;
        let mut spectrum = compute_spectrum(x.inner(), hint)?;
        eps = eps_update(eps, cfg.gamma, spectrum.sigma[cfg.target_rank]);
        // A sigma_{K+1} at the round-off floor means the iterate is
        // numerically K-rank: snap eps to exactly zero so the run stops
        // instead of continuing with a weight of condition ~1/eps.
        let zero_floor = spectrum.sigma[0] * f64::EPSILON * n.max(p) as f64;
        if spectrum.sigma[cfg.target_rank] <= zero_floor {
            eps = 0.0;
        }
        spectrum = resolve_rank(x.inner(), spectrum, eps)?;
        let r = rank_above(&spectrum.sigma, eps);

        let step = match &x_prev {
            Some(prev) => (&x - prev).frobenius_norm(),
            None => x.frobenius_norm(),
        };
        let top_sum: f64 = spectrum.sigma[..r].iter().sum();
        trace.push(IterRecord {
            j_value: j_value_padded(&spectrum, n, min_dim, eps),
            eps,
            rank_above_eps: r,
            step_frobenius: step,
            wall_secs: tick.elapsed().as_secs_f64(),
            w_inv_trace: (n - r) as f64 * eps + top_sum,
            nuclear_norm: spectrum.sigma.iter().sum(),
        });
        x_prev = Some(x);

        if let Some(reason) = stop_check(&trace, cfg) {
            break reason;
        }
        weights = WeightFactors::from_spectrum(&spectrum, eps, r, n);
    };

    Ok(SolverReport {
        x_final: x_prev.expect("at least one iterate was produced"),
        iterations: trace.len(),
        stop_reason,
        trace,
    })
}

/// General weighted least-squares update: the unique solution of
/// `min ||W^{1/2} X||_F^2  s.t.  S(X) = M`, computed as
/// `W^{-1} S*((S W^{-1} S*)^{-1} M)` by factoring the explicit `m x m`
/// Gram matrix `G_ab = <S*(e_a), W^{-1} S*(e_b)>`. Intended for modest `m`.
pub fn x_update_dense(
    op: &MeasurementOp,
    m: &MeasurementVec,
    weights: &WeightFactors,
) -> Result<DenseMatrix> {
    let mm = op.len();
    if m.len() != mm {
        return Err(Error::InvalidArgument(format!(
            "operator yields {mm} measurements but the data vector has {}",
            m.len()
        )));
    }
    if weights.dim() != op.rows() {
        return Err(Error::InvalidArgument(format!(
            "weight dimension {} does not match operator rows {}",
            weights.dim(),
            op.rows()
        )));
    }
    let mut basis = Vec::with_capacity(mm);
    let mut winv_basis = Vec::with_capacity(mm);
    for a in 0..mm {
        let mut e = vec![0.0; mm];
        e[a] = 1.0;
        let adj = op.adjoint(&MeasurementVec::new(e)?)?;
        winv_basis.push(weights.apply_w_inv_mat(adj.inner()));
        basis.push(adj);
    }
    let mut gram = DMatrix::zeros(mm, mm);
    for a in 0..mm {
        for b in a..mm {
            let v = basis[a].inner().dot(&winv_basis[b]);
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let chol = spd_cholesky(gram).ok_or_else(|| {
        Error::IllPosed("normal system is singular; the operator is not surjective".into())
    })?;
    let lam = chol.solve(&DVector::from_column_slice(m.as_slice()));
    let lam = MeasurementVec::new(lam.iter().copied().collect())
        .map_err(|_| Error::NumericalFailure("multipliers are non-finite".into()))?;
    Ok(weights.apply_w_inv(&op.adjoint(&lam)?))
}

/// Separable update for completion operators. Column `i` solves
/// `X_i = W^{-1} S_i^T (S_i W^{-1} S_i^T)^{-1} M_i` with
/// `(S_i W^{-1} S_i^T)^{-1} = eps^{-1} [I - U_i (eps D^{-1} + U_i^T U_i)^{-1} U_i^T]`,
/// `U_i = S_i U_r`, `D = diag(sigma_j - eps)`, so the only factorization is
/// `r x r`. Columns without observations minimize the weighted norm freely
/// and are zero. Falls back to factoring the `m_i x m_i` system directly
/// if the small system resists factorization.
pub fn x_update_completion(
    op: &MeasurementOp,
    m: &MeasurementVec,
    weights: &WeightFactors,
) -> Result<DenseMatrix> {
    let (observed, offsets) = op.completion_parts().ok_or_else(|| {
        Error::InvalidArgument("the Woodbury path requires an entry-sampling operator".into())
    })?;
    if m.len() != op.len() {
        return Err(Error::InvalidArgument(format!(
            "operator yields {} measurements but the data vector has {}",
            op.len(),
            m.len()
        )));
    }
    if weights.dim() != op.rows() {
        return Err(Error::InvalidArgument(format!(
            "weight dimension {} does not match operator rows {}",
            weights.dim(),
            op.rows()
        )));
    }
    let n = op.rows();
    let p = op.cols();
    let eps = weights.eps();
    let r = weights.rank();
    let u = weights.u_r_mat();
    let shifted: Vec<f64> = weights.sigma_r().iter().map(|&s| s - eps).collect();
    let data = m.as_slice();

    let columns: Vec<DVector<f64>> = (0..p)
        .into_par_iter()
        .map(|j| -> Result<DVector<f64>> {
            let rows = &observed[j];
            let mi = rows.len();
            let mut col = DVector::zeros(n);
            if mi == 0 {
                return Ok(col);
            }
            let block = &data[offsets[j]..offsets[j] + mi];
            if r == 0 {
                for (t, &i) in rows.iter().enumerate() {
                    col[i] = eps * (block[t] / eps);
                }
                return Ok(col);
            }
            let mut ui = DMatrix::zeros(mi, r);
            for (t, &i) in rows.iter().enumerate() {
                ui.row_mut(t).copy_from(&u.row(i));
            }
            let rhs_vec = DVector::from_column_slice(block);
            let mut small = ui.tr_mul(&ui);
            for l in 0..r {
                small[(l, l)] += eps / shifted[l];
            }
            match spd_cholesky(small) {
                Some(chol) => {
                    // With z = C^{-1} U_i^T b one has the identity
                    // U_i^T (b - U_i z) = eps D^{-1} z, which collapses the
                    // column update to
                    //   X_i = S_i^T (b - U_i z) + U_r z.
                    // No quantity is divided by eps, so the update stays
                    // accurate however small the regularization gets.
                    let z = chol.solve(&ui.tr_mul(&rhs_vec));
                    let mut resid = rhs_vec.clone();
                    resid.gemm(-1.0, &ui, &z, 1.0);
                    col.gemm(1.0, u, &z, 0.0);
                    for (t, &i) in rows.iter().enumerate() {
                        col[i] += resid[t];
                    }
                }
                None => {
                    // Direct m_i x m_i fallback: eps I + U_i D U_i^T.
                    let mut ui_scaled = ui.clone();
                    for (l, &d) in shifted.iter().enumerate() {
                        ui_scaled.column_mut(l).scale_mut(d);
                    }
                    let mut big = ui_scaled * ui.transpose();
                    for t in 0..mi {
                        big[(t, t)] += eps;
                    }
                    let y = spd_cholesky(big)
                        .ok_or_else(|| {
                            Error::NumericalFailure(format!(
                                "column {j}: neither the r x r nor the m_i x m_i system factorized"
                            ))
                        })?
                        .solve(&rhs_vec);
                    let mut coef = ui.tr_mul(&y);
                    for (l, &d) in shifted.iter().enumerate() {
                        coef[l] *= d;
                    }
                    col.gemm(1.0, u, &coef, 0.0);
                    for (t, &i) in rows.iter().enumerate() {
                        col[i] += eps * y[t];
                    }
                }
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = DMatrix::zeros(n, p);
    for (j, col) in columns.into_iter().enumerate() {
        out.set_column(j, &col);
    }
    Ok(DenseMatrix::from_inner(out))
}

/// Builds the spectral weight of `X` stabilized at `eps`: retains the
/// singular values strictly above `eps` (with a small guard so that
/// `1/(sigma_j - eps)` stays finite) together with their left singular
/// vectors. Densified, the result equals the inverse of the
/// eps-stabilized square root of `X X^T`.
pub fn weight_update(x: &DenseMatrix, eps: f64) -> Result<WeightFactors> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !x.is_finite() {
        return Err(Error::InvalidInput("matrix entries must be finite".into()));
    }
    let hint = 16;
    let mut spectrum = compute_spectrum(x.inner(), hint)?;
    spectrum = resolve_rank(x.inner(), spectrum, eps)?;
    let r = rank_above(&spectrum.sigma, eps);
    Ok(WeightFactors::from_spectrum(&spectrum, eps, r, x.rows()))
}

/// Number of leading singular values counted as "above eps": strictly
/// greater than `eps (1 + 1e-12)` and separated from it by at least
/// `1e-12 sigma_1`, so the factored inverse stays well-defined.
fn rank_above(sigma: &[f64], eps: f64) -> usize {
    let sigma1 = sigma.first().copied().unwrap_or(0.0);
    sigma
        .iter()
        .take_while(|&&s| s > eps * (1.0 + 1e-12) && s - eps >= 1e-12 * sigma1)
        .count()
}

pub(crate) struct Spectrum {
    /// Leading singular values, nonincreasing.
    pub sigma: Vec<f64>,
    /// Matching left singular vectors, one column each.
    pub u: DMatrix<f64>,
    /// Squared Frobenius norm of the decomposed matrix.
    pub frob_sq: f64,
    /// True if `sigma` covers only part of the spectrum.
    pub partial: bool,
}

/// Computes the spectrum of `x`: full SVD for small matrices, block
/// subspace iteration for the leading `hint` triplets otherwise.
pub(crate) fn compute_spectrum(x: &DMatrix<f64>, hint: usize) -> Result<Spectrum> {
    let min_dim = x.nrows().min(x.ncols());
    let frob_sq = x.norm_squared();
    if min_dim <= FULL_SVD_MAX_DIM || hint * 4 >= min_dim {
        return full_spectrum(x, frob_sq);
    }
    if frob_sq == 0.0 {
        // Zero matrix: any orthonormal block works as the (unused) basis.
        let t = hint.min(min_dim);
        let mut u = DMatrix::zeros(x.nrows(), t);
        for j in 0..t {
            u[(j, j)] = 1.0;
        }
        return Ok(Spectrum { sigma: vec![0.0; t], u, frob_sq, partial: false });
    }
    match partial_spectrum(x, hint.min(min_dim)) {
        Some(s) => Ok(s),
        None => full_spectrum(x, frob_sq),
    }
}

/// Grows a partial spectrum until the count of values above `eps` is
/// resolved, i.e. some computed value falls at or below `eps`.
pub(crate) fn resolve_rank(x: &DMatrix<f64>, mut spectrum: Spectrum, eps: f64) -> Result<Spectrum> {
    let min_dim = x.nrows().min(x.ncols());
    loop {
        if !spectrum.partial
            || spectrum.sigma.len() >= min_dim
            || rank_above(&spectrum.sigma, eps) < spectrum.sigma.len()
        {
            return Ok(spectrum);
        }
        let t = (spectrum.sigma.len() * 2).min(min_dim);
        spectrum = compute_spectrum(x, t)?;
        if !spectrum.partial {
            return Ok(spectrum);
        }
    }
}

fn full_spectrum(x: &DMatrix<f64>, frob_sq: f64) -> Result<Spectrum> {
    let factors = DenseMatrix::from_inner(x.clone()).svd()?;
    Ok(Spectrum {
        sigma: factors.sigma().to_vec(),
        u: factors.u().inner().clone(),
        frob_sq,
        partial: false,
    })
}

/// Block subspace iteration with Rayleigh-Ritz extraction: repeatedly
/// applies `X X^T` to an orthonormal block of `t` columns, then reads the
/// leading triplets from the small projected matrix. Converged when every
/// Ritz residual `||X v_j - sigma_j u_j||` falls below `1e-10 sigma_1`.
/// Returns `None` if the sweep cap is hit, in which case the caller falls
/// back to a full decomposition.
fn partial_spectrum(x: &DMatrix<f64>, t: usize) -> Option<Spectrum> {
    let n = x.nrows();
    let frob_sq = x.norm_squared();
    let mut rng = stream_rng(0, STREAM_SUBSPACE);
    let start = DMatrix::from_fn(n, t, |_, _| {
        rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
    });
    let mut q = start.qr().q();
    for _ in 0..MAX_SUBSPACE_SWEEPS {
        for _ in 0..2 {
            let z = x * x.tr_mul(&q);
            q = z.qr().q();
        }
        // Rayleigh-Ritz on the projected t x p matrix.
        let c = q.tr_mul(x);
        let svd = c.clone().try_svd(true, true, f64::EPSILON, 0)?;
        let ut = svd.u.as_ref()?;
        let vt = svd.v_t.as_ref()?;
        let mut order: Vec<usize> = (0..t).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
        let mut sigma = Vec::with_capacity(t);
        let mut u = DMatrix::zeros(n, t);
        let mut v = DMatrix::zeros(x.ncols(), t);
        for (dst, &src) in order.iter().enumerate() {
            sigma.push(svd.singular_values[src]);
            u.set_column(dst, &(&q * ut.column(src)));
            v.set_column(dst, &vt.row(src).transpose());
        }
        // Residual check.
        let xv = x * &v;
        let sigma1 = sigma[0].max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for j in 0..t {
            let res = (xv.column(j) - u.column(j) * sigma[j]).norm();
            worst = worst.max(res);
        }
        if worst <= 1e-10 * sigma1 {
            return Some(Spectrum { sigma, u, frob_sq, partial: true });
        }
        q = u;
    }
    None
}

/// Value of the iteration functional from the spectrum alone:
/// `sum_i j_eps(sigma_i)` over the weight dimension `dim` (missing values
/// are zeros), with `j_eps(s) = s` above `eps` and `(s^2 + eps^2)/(2 eps)`
/// below. For a partial spectrum the uncomputed tail is recovered from the
/// Frobenius norm; every tail value lies below `eps` by construction, so
/// the recovered energy is capped at `count * eps^2` to keep round-off in
/// the norm subtraction from being amplified by `1/eps`.
fn j_value_padded(spectrum: &Spectrum, dim: usize, min_dim: usize, eps: f64) -> f64 {
    let sigma = &spectrum.sigma;
    if eps <= 0.0 {
        return sigma.iter().sum();
    }
    let mut j = 0.0;
    let mut top_sq = 0.0;
    for &s in sigma {
        top_sq += s * s;
        j += if s >= eps { s } else { (s * s + eps * eps) / (2.0 * eps) };
    }
    let tail_count = min_dim.saturating_sub(sigma.len());
    let tail_sq = if spectrum.partial {
        (spectrum.frob_sq - top_sq)
            .max(0.0)
            .min(tail_count as f64 * eps * eps * (1.0 + 1e-9))
    } else {
        0.0
    };
    let remaining = dim.saturating_sub(sigma.len());
    j + (tail_sq + remaining as f64 * eps * eps) / (2.0 * eps)
}

fn spd_cholesky(g: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let dim = g.nrows();
    match Cholesky::new(g.clone()) {
        Some(c) => Some(c),
        None => {
            // One retry with diagonal jitter proportional to the mean
            // eigenvalue; a second failure is reported to the caller.
            let jitter = 1e-12 * g.trace() / dim as f64;
            if !(jitter > 0.0) {
                return None;
            }
            let mut g = g;
            for i in 0..dim {
                g[(i, i)] += jitter;
            }
            Cholesky::new(g)
        }
    }
}
