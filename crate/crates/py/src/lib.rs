//! Python bindings for the matrec toolkit: the dense matrix type, the
//! spectral operations, the completion solver, and the theory-side
//! calculators. Matrices cross the boundary as nested lists of floats.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use matrec_core::analysis;
use matrec_core::bench;
use matrec_core::image;
use matrec_core::measure::MeasurementOp;
use matrec_core::solver::{self, SolverConfig, SolverPath, SolverReport};
use matrec_core::DenseMatrix;

fn err<T>(e: matrec_core::Error) -> PyResult<T> {
    Err(PyValueError::new_err(e.to_string()))
}

/// Dense real matrix.
#[pyclass(name = "Matrix", from_py_object)]
#[derive(Clone)]
struct PyMatrix {
    inner: DenseMatrix,
}

#[pymethods]
impl PyMatrix {
    /// Builds a matrix from a nested list of rows.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        if rows.is_empty() {
            return Err(PyValueError::new_err("matrix needs at least one row"));
        }
        let n = rows.len();
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(PyValueError::new_err("rows must all have the same length"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        match DenseMatrix::from_row_major(n, p, &flat) {
            Ok(inner) => Ok(Self { inner }),
            Err(e) => err(e),
        }
    }

    #[staticmethod]
    fn zeros(rows: usize, cols: usize) -> PyResult<Self> {
        if rows == 0 || cols == 0 {
            return Err(PyValueError::new_err("dimensions must be positive"));
        }
        Ok(Self { inner: DenseMatrix::zeros(rows, cols) })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        if row >= self.inner.rows() || col >= self.inner.cols() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(row, col))
    }

    /// Entries as a nested list of rows.
    fn to_lists(&self) -> Vec<Vec<f64>> {
        (0..self.inner.rows())
            .map(|i| (0..self.inner.cols()).map(|j| self.inner.get(i, j)).collect())
            .collect()
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    fn nuclear_norm(&self) -> PyResult<f64> {
        self.inner.nuclear_norm().or_else(err)
    }

    fn singular_values(&self) -> PyResult<Vec<f64>> {
        self.inner.singular_values().or_else(err)
    }

    fn transpose(&self) -> Self {
        Self { inner: self.inner.transpose() }
    }

    fn __repr__(&self) -> String {
        format!("Matrix({}x{})", self.inner.rows(), self.inner.cols())
    }
}

/// Singular value decomposition `(U, sigma, V)` with `X = U diag(sigma) V^T`.
#[pyfunction]
fn svd(x: &PyMatrix) -> PyResult<(PyMatrix, Vec<f64>, PyMatrix)> {
    match x.inner.svd() {
        Ok(f) => Ok((
            PyMatrix { inner: f.u().clone() },
            f.sigma().to_vec(),
            PyMatrix { inner: f.v().clone() },
        )),
        Err(e) => err(e),
    }
}

/// Best rank-k approximation by spectral truncation.
#[pyfunction]
fn truncate_k(x: &PyMatrix, k: usize) -> PyResult<PyMatrix> {
    let f = x.inner.svd().or_else(err)?;
    match f.truncate(k) {
        Ok(m) => Ok(PyMatrix { inner: m }),
        Err(e) => err(e),
    }
}

/// Schatten q-norm; `q = float("inf")` gives the operator norm.
#[pyfunction]
fn schatten_norm(x: &PyMatrix, q: f64) -> PyResult<f64> {
    x.inner.schatten_norm(q).or_else(err)
}

/// Nuclear-norm error of the best rank-k approximation.
#[pyfunction]
fn best_k_error(x: &PyMatrix, k: usize) -> PyResult<f64> {
    x.inner.best_k_error(k).or_else(err)
}

/// Componentwise `max(sigma_j, eps)` stabilization of a singular value vector.
#[pyfunction]
fn eps_stabilize(sigma: Vec<f64>, eps: f64) -> PyResult<Vec<f64>> {
    matrec_core::eps_stabilize(&sigma, eps).or_else(err)
}

/// Planted rank-k factor model with seeded standard normal factors.
#[pyfunction]
fn gen_lowrank(n: usize, p: usize, k: usize, seed: u64) -> PyResult<PyMatrix> {
    match bench::gen_lowrank(n, p, k, seed) {
        Ok(m) => Ok(PyMatrix { inner: m }),
        Err(e) => err(e),
    }
}

/// Uniform without-replacement mask of `floor(fraction * n * p)` positions.
#[pyfunction]
fn uniform_mask(n: usize, p: usize, fraction: f64, seed: u64) -> PyResult<Vec<(usize, usize)>> {
    matrec_core::uniform_mask(n, p, fraction, seed).or_else(err)
}

/// Relative Frobenius error `||x - xhat||_F / ||x||_F`.
#[pyfunction]
fn rel_error(xhat: &PyMatrix, x: &PyMatrix) -> PyResult<f64> {
    bench::rel_error(&xhat.inner, &x.inner).or_else(err)
}

/// Smoothed nuclear norm `J_eps`.
#[pyfunction]
fn j_eps(x: &PyMatrix, eps: f64) -> PyResult<f64> {
    analysis::j_eps(&x.inner, eps).or_else(err)
}

/// Null-space contraction factor `eta` from restricted isometry constants.
#[pyfunction]
fn eta_from_rip(delta_3k: f64, delta_4k: f64) -> PyResult<f64> {
    analysis::eta_from_rip(delta_3k, delta_4k).or_else(err)
}

/// Error amplification constant `Lambda` of the recovery guarantee.
#[pyfunction]
fn lambda_bound(eta: f64, big_k: usize, k: usize) -> PyResult<f64> {
    analysis::lambda_bound(eta, big_k, k).or_else(err)
}

fn config_from_args(
    rank: usize,
    gamma: f64,
    max_iter: usize,
    eps_tol: f64,
    eps_stall: usize,
    path: &str,
) -> PyResult<SolverConfig> {
    let path = match path {
        "auto" => SolverPath::Auto,
        "dense" => SolverPath::Dense,
        "woodbury" => SolverPath::Woodbury,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown path '{other}' (expected auto, dense, or woodbury)"
            )))
        }
    };
    Ok(SolverConfig::new(rank)
        .with_gamma(gamma)
        .with_max_iter(max_iter)
        .with_stall(eps_tol, eps_stall)
        .with_path(path))
}

fn report_dict<'py>(py: Python<'py>, report: &SolverReport) -> PyResult<Bound<'py, PyDict>> {
    let info = PyDict::new(py);
    info.set_item("iterations", report.iterations)?;
    info.set_item("stop_reason", report.stop_reason.to_string())?;
    if let Some(last) = report.trace.last() {
        info.set_item("final_eps", last.eps)?;
        info.set_item("final_rank_above_eps", last.rank_above_eps)?;
    }
    info.set_item("j_values", report.trace.iter().map(|r| r.j_value).collect::<Vec<_>>())?;
    info.set_item("eps_values", report.trace.iter().map(|r| r.eps).collect::<Vec<_>>())?;
    Ok(info)
}

/// Completes an `n x p` matrix from observed entries `(row, col, value)`.
/// Returns the recovered matrix and a dict with the solve trace summary.
#[pyfunction]
#[pyo3(signature = (n, p, entries, rank, gamma = 1.0, max_iter = 200, eps_tol = 1e-6, eps_stall = 50, path = "auto"))]
#[allow(clippy::too_many_arguments)]
fn complete<'py>(
    py: Python<'py>,
    n: usize,
    p: usize,
    entries: Vec<(usize, usize, f64)>,
    rank: usize,
    gamma: f64,
    max_iter: usize,
    eps_tol: f64,
    eps_stall: usize,
    path: &str,
) -> PyResult<(PyMatrix, Bound<'py, PyDict>)> {
    let cfg = config_from_args(rank, gamma, max_iter, eps_tol, eps_stall, path)?;
    let pairs: Vec<(usize, usize)> = entries.iter().map(|&(i, j, _)| (i, j)).collect();
    let values: Vec<f64> = entries.iter().map(|&(_, _, v)| v).collect();
    let op = MeasurementOp::completion(n, p, &pairs).or_else(err)?;
    let m = op.vec_from_pairs(&pairs, &values).or_else(err)?;
    let report = solver::solve(&op, &m, &cfg).or_else(err)?;
    let info = report_dict(py, &report)?;
    Ok((PyMatrix { inner: report.x_final.clone() }, info))
}

/// Completes a grayscale image given as nested lists of 0..=255 pixel
/// rows, observing `fraction` of the pixels uniformly at random.
#[pyfunction]
#[pyo3(signature = (pixels, fraction, rank, seed = 0, gamma = 1.0, max_iter = 200))]
fn complete_image<'py>(
    py: Python<'py>,
    pixels: Vec<Vec<u8>>,
    fraction: f64,
    rank: usize,
    seed: u64,
    gamma: f64,
    max_iter: usize,
) -> PyResult<(Vec<Vec<u8>>, Bound<'py, PyDict>)> {
    if pixels.is_empty() || pixels[0].is_empty() {
        return Err(PyValueError::new_err("image needs at least one pixel"));
    }
    let height = pixels.len();
    let width = pixels[0].len();
    if pixels.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("pixel rows must all have the same length"));
    }
    let flat: Vec<u8> = pixels.into_iter().flatten().collect();
    let img = image::GrayImage::new(width, height, flat).or_else(err)?;
    let mask = image::sample_pixels(&img, fraction, seed).or_else(err)?;
    let cfg = SolverConfig::new(rank).with_gamma(gamma).with_max_iter(max_iter);
    let out = image::complete_image(&img, &mask, &cfg).or_else(err)?;
    let info = report_dict(py, &out.report)?;
    let rows: Vec<Vec<u8>> = (0..height)
        .map(|i| (0..width).map(|j| out.image.get(i, j)).collect())
        .collect();
    Ok((rows, info))
}

#[pymodule]
fn matrec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_function(wrap_pyfunction!(svd, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_k, m)?)?;
    m.add_function(wrap_pyfunction!(schatten_norm, m)?)?;
    m.add_function(wrap_pyfunction!(best_k_error, m)?)?;
    m.add_function(wrap_pyfunction!(eps_stabilize, m)?)?;
    m.add_function(wrap_pyfunction!(gen_lowrank, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_mask, m)?)?;
    m.add_function(wrap_pyfunction!(rel_error, m)?)?;
    m.add_function(wrap_pyfunction!(j_eps, m)?)?;
    m.add_function(wrap_pyfunction!(eta_from_rip, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_bound, m)?)?;
    m.add_function(wrap_pyfunction!(complete, m)?)?;
    m.add_function(wrap_pyfunction!(complete_image, m)?)?;
    Ok(())
}
