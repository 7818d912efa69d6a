//! Variational functionals, runtime monitors for the descent properties of
//! a solve, and theory-side guarantee calculators.
//!
//! Everything here is a pure function. Monte-Carlo routines take explicit
//! seeds and map trial `t` to a fixed random stream, so results are
//! reproducible and independent of evaluation order.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{random_orthogonal, DenseMatrix};
use crate::measure::MeasurementOp;
use crate::rng::{stream_rng, trial_seed, STREAM_RIP, STREAM_WEIGHT};
use crate::solver::{weight_update, SolverReport, WeightFactors};

/// The weighted functional `J(X, W) = (||W^{1/2} X||_F^2 + ||W^{-1/2}||_F^2) / 2`,
/// evaluated through the factored weight via trace identities:
/// `||W^{1/2} X||_F^2 = trace(W X X^T)` and `||W^{-1/2}||_F^2 = trace(W^{-1})`.
pub fn j_functional(x: &DenseMatrix, w: &WeightFactors) -> f64 {
    assert_eq!(x.rows(), w.dim(), "weight dimension must match the matrix rows");
    let eps = w.eps();
    // trace(W X X^T) = ||X||_F^2 / eps + sum_l (1/sigma_l - 1/eps) ||u_l^T X||^2
    let mut quad = x.frobenius_norm().powi(2) / eps;
    if w.rank() > 0 {
        let ut_x = w.u_r_mat().tr_mul(x.inner());
        for (l, &s) in w.sigma_r().iter().enumerate() {
            let row_sq: f64 = ut_x.row(l).iter().map(|v| v * v).sum();
            quad += (1.0 / s - 1.0 / eps) * row_sq;
        }
    }
    0.5 * (quad + w.w_inv_trace())
}

/// Smoothed nuclear norm `J_eps(X) = sum_i j_eps(sigma_i(X))` with
/// `j_eps(u) = |u|` for `|u| >= eps` and `(u^2 + eps^2) / (2 eps)` below.
pub fn j_eps(x: &DenseMatrix, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let sigma = x.singular_values()?;
    Ok(sigma.iter().map(|&s| j_eps_scalar(s, eps)).sum())
}

fn j_eps_scalar(u: f64, eps: f64) -> f64 {
    if u >= eps {
        u
    } else {
        (u * u + eps * eps) / (2.0 * eps)
    }
}

/// Gradient of `J_eps`: `U diag(j_eps'(sigma_i)) V^T` with
/// `j_eps'(u) = 1` for `u >= eps` and `u / eps` below (the branches agree
/// at the kink `u = eps`).
pub fn grad_j_eps(x: &DenseMatrix, eps: f64) -> Result<DenseMatrix> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let f = x.svd()?;
    let k = f.sigma().len();
    let mut out = DMatrix::zeros(x.rows(), x.cols());
    for j in 0..k {
        let s = f.sigma()[j];
        let d = if s >= eps { 1.0 } else { s / eps };
        if d == 0.0 {
            continue;
        }
        let uj = f.u().inner().column(j);
        let vj = f.v().inner().column(j);
        out.gemm(d, &uj, &vj.transpose(), 1.0);
    }
    Ok(DenseMatrix::from_inner(out))
}

/// Result of a single monitored descent property.
#[derive(Clone, Debug)]
pub struct PropertyCheck {
    pub pass: bool,
    /// Magnitude of the worst violation found (0 when the property holds).
    pub worst_violation: f64,
    /// Trace index where the worst violation occurred.
    pub worst_index: Option<usize>,
}

impl PropertyCheck {
    fn pass() -> Self {
        Self { pass: true, worst_violation: 0.0, worst_index: None }
    }
}

/// Diagnostics of the three descent properties of a solve trace: the
/// functional never increases, it dominates the nuclear norm, and squared
/// step norms have bounded partial sums.
#[derive(Clone, Debug)]
pub struct MonotonicityReport {
    pub j_nonincreasing: PropertyCheck,
    pub j_dominates_nuclear: PropertyCheck,
    pub step_sum_bounded: PropertyCheck,
    /// The constant `A = max_l trace((W^l)^{-1})` used by the step-sum bound.
    pub a_constant: f64,
}

impl MonotonicityReport {
    pub fn all_pass(&self) -> bool {
        self.j_nonincreasing.pass && self.j_dominates_nuclear.pass && self.step_sum_bounded.pass
    }
}

/// Verifies on a finished trace, with small numerical slack:
/// (i) `J_{l+1} <= J_l`, (ii) `J_l >= ||X^l||_*`, and
/// (iii) `sum_l ||X^{l+1} - X^l||_F^2 <= 2 A J_1` with
/// `A = max_l trace((W^l)^{-1})`. The sum in (iii) starts at the step
/// between the first two recorded iterates, the first point where both
/// sides of the telescoping argument are feasible.
pub fn check_monotonicity(report: &SolverReport) -> MonotonicityReport {
    let trace = &report.trace;
    let a_constant = trace.iter().map(|r| r.w_inv_trace).fold(0.0f64, f64::max);
    if trace.len() < 2 {
        return MonotonicityReport {
            j_nonincreasing: PropertyCheck::pass(),
            j_dominates_nuclear: PropertyCheck::pass(),
            step_sum_bounded: PropertyCheck::pass(),
            a_constant,
        };
    }

    let mut mono = PropertyCheck::pass();
    for l in 1..trace.len() {
        let prev = trace[l - 1].j_value;
        let cur = trace[l].j_value;
        let violation = (cur - prev * (1.0 + 1e-10)) / prev.abs().max(f64::MIN_POSITIVE);
        if violation > 0.0 && violation > mono.worst_violation {
            mono = PropertyCheck { pass: false, worst_violation: violation, worst_index: Some(l) };
        }
    }

    let mut dominate = PropertyCheck::pass();
    for (l, rec) in trace.iter().enumerate() {
        let violation = (rec.nuclear_norm - rec.j_value * (1.0 + 1e-9)) / rec.j_value.abs().max(f64::MIN_POSITIVE);
        if violation > 0.0 && violation > dominate.worst_violation {
            dominate = PropertyCheck { pass: false, worst_violation: violation, worst_index: Some(l) };
        }
    }

    let step_sum: f64 = trace[1..].iter().map(|r| r.step_frobenius * r.step_frobenius).sum();
    let bound = 2.0 * a_constant * trace[0].j_value;
    let step_check = if step_sum <= bound * (1.0 + 1e-9) + 1e-12 {
        PropertyCheck::pass()
    } else {
        PropertyCheck {
            pass: false,
            worst_violation: (step_sum - bound) / bound.abs().max(f64::MIN_POSITIVE),
            worst_index: None,
        }
    };

    MonotonicityReport {
        j_nonincreasing: mono,
        j_dominates_nuclear: dominate,
        step_sum_bounded: step_check,
        a_constant,
    }
}

/// Maximum over `trials` kernel samples `H` of the normalized optimality
/// residual `|<W X, H>| / (||W X||_F ||H||_F)`. Near zero exactly when `X`
/// solves the weighted least-squares problem on the affine constraint set.
pub fn optimality_residual(
    x: &DenseMatrix,
    w: &WeightFactors,
    op: &MeasurementOp,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let wx = w.apply_w(x);
    let wx_norm = wx.frobenius_norm();
    if wx_norm == 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for t in 0..trials {
        let h = op.kernel_sample(trial_seed(seed, t as u64))?;
        let res = wx.dot(&h).abs() / (wx_norm * h.frobenius_norm());
        worst = worst.max(res);
    }
    Ok(worst)
}

/// Outcome of the constrained weight optimality test.
#[derive(Clone, Debug)]
pub struct WeightOptimality {
    pub pass: bool,
    /// Largest value of `J(X, W_bar) - J(X, W)` over the sampled admissible
    /// weights; at most ~0 when `W_bar` is the constrained minimizer.
    pub worst_gap: f64,
}

/// Samples `trials` random admissible weights `W = Q diag(d) Q^T` with
/// `0 < d <= 1/eps` (eigenvalues log-uniform in `[1e-3/eps, 1/eps]`) and
/// checks that the stabilized spectral weight of `X` never loses:
/// `J(X, W_bar) <= J(X, W) + 1e-10`.
pub fn weight_optimality_check(
    x: &DenseMatrix,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<WeightOptimality> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let n = x.rows();
    let w_bar = weight_update(x, eps)?;
    let j_bar = j_functional(x, &w_bar);
    let mut worst_gap = f64::NEG_INFINITY;
    for t in 0..trials {
        let mut rng = stream_rng(seed, STREAM_WEIGHT + t as u64);
        let q = random_orthogonal(n, &mut rng);
        let lo = (1e-3 / eps).ln();
        let hi = (1.0 / eps).ln();
        let d: Vec<f64> = (0..n).map(|_| (lo + (hi - lo) * rng.random::<f64>()).exp()).collect();
        let j_w = j_eigenform(x, &q, &d);
        worst_gap = worst_gap.max(j_bar - j_w);
    }
    Ok(WeightOptimality { pass: worst_gap <= 1e-10, worst_gap })
}

/// `J(X, Q diag(d) Q^T)` evaluated from the eigendecomposition directly.
pub fn j_eigenform(x: &DenseMatrix, q: &DenseMatrix, d: &[f64]) -> f64 {
    assert_eq!(q.rows(), x.rows(), "eigenbasis must match the matrix rows");
    assert_eq!(q.cols(), d.len(), "one eigenvalue per basis column");
    let qt_x = &q.transpose() * x;
    let mut quad = 0.0;
    let mut inv_trace = 0.0;
    for (l, &dl) in d.iter().enumerate() {
        let mut row_sq = 0.0;
        for j in 0..qt_x.cols() {
            let v = qt_x.get(l, j);
            row_sq += v * v;
        }
        quad += dl * row_sq;
        inv_trace += 1.0 / dl;
    }
    0.5 * (quad + inv_trace)
}

/// Monte-Carlo lower bound on the restricted isometry constant `delta_k`:
/// the maximum of `| ||S(X)||^2 - 1 |` over `trials` random unit-Frobenius
/// rank-k matrices `X = A B^T`. A sampled bound never exceeds the true
/// constant; it is not an exact value.
pub fn rip_estimate(op: &MeasurementOp, k: usize, trials: usize, seed: u64) -> Result<f64> {
    let min_dim = op.rows().min(op.cols());
    if k < 1 || k > min_dim {
        return Err(Error::InvalidArgument(format!(
            "rank k = {k} must satisfy 1 <= k <= min(n, p) = {min_dim}"
        )));
    }
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut rng = stream_rng(seed, STREAM_RIP + t as u64);
        let a = DMatrix::<f64>::from_fn(op.rows(), k, |_, _| StandardNormal.sample(&mut rng));
        let b = DMatrix::<f64>::from_fn(op.cols(), k, |_, _| StandardNormal.sample(&mut rng));
        let x = DenseMatrix::from_inner(a * b.transpose());
        worst = worst.max(rip_witness(op, &x)?);
    }
    Ok(worst)
}

/// Isometry defect of a single direction: `| ||S(X)||^2 / ||X||_F^2 - 1 |`.
/// Any direction with a large defect certifies a lower bound on `delta_k`
/// for `k >= rank(X)`.
pub fn rip_witness(op: &MeasurementOp, x: &DenseMatrix) -> Result<f64> {
    let norm_sq: f64 = x.as_column_major().iter().map(|v| v * v).sum();
    if norm_sq == 0.0 {
        return Err(Error::InvalidArgument("witness direction must be nonzero".into()));
    }
    let energy: f64 = op.apply(x)?.as_slice().iter().map(|v| v * v).sum();
    Ok((energy / norm_sq - 1.0).abs())
}

/// Null-space contraction factor implied by restricted isometry:
/// `eta = sqrt(2) delta_{4k} / (1 - delta_{3k})`. Recovery guarantees need
/// `eta < 1`, which holds when `delta_{4k} < sqrt(2) - 1`.
pub fn eta_from_rip(delta_3k: f64, delta_4k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta_3k) || !(0.0..1.0).contains(&delta_4k) || delta_3k > delta_4k {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= delta_3k <= delta_4k < 1, got ({delta_3k}, {delta_4k})"
        )));
    }
    Ok(std::f64::consts::SQRT_2 * delta_4k / (1.0 - delta_3k))
}

/// Error amplification constant of the recovery guarantee:
/// `Lambda = 4 (1 + eta)^2 / ((1 - eta)^2 ((K - k)(1 - eta) - 2 eta))
///  + 2 (1 + eta) / (1 - eta)`,
/// valid for `0 <= eta < 1` and `k < K - 2 eta / (1 - eta)`.
pub fn lambda_bound(eta: f64, big_k: usize, k: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::OutOfRegime(format!("eta must lie in [0, 1), got {eta}")));
    }
    if k >= big_k {
        return Err(Error::OutOfRegime(format!("need k < K, got k = {k}, K = {big_k}")));
    }
    let gap = (big_k - k) as f64 * (1.0 - eta) - 2.0 * eta;
    if gap <= 0.0 {
        return Err(Error::OutOfRegime(format!(
            "need k < K - 2 eta / (1 - eta); the margin (K - k)(1 - eta) - 2 eta = {gap} is not positive"
        )));
    }
    let one_minus = 1.0 - eta;
    let one_plus = 1.0 + eta;
    Ok(4.0 * one_plus * one_plus / (one_minus * one_minus * gap) + 2.0 * one_plus / one_minus)
}

/// Threshold `1 - 2/(K - 2)` that `eta` must stay below for the
/// convergence guarantee at `gamma = 1/n`; `None` when `K <= 2`.
pub fn prop_mini_threshold(big_k: usize) -> Option<f64> {
    (big_k > 2).then(|| 1.0 - 2.0 / (big_k as f64 - 2.0))
}
