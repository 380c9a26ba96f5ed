//! Python extension module exposing the operator scaling library.
//!
//! Matrices cross the boundary as nested lists of floats (row major), so
//! the module has no array-library dependency; converting to numpy on the
//! Python side is a single `np.array(...)` call.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use opscale as core;
use opscale::{
    FactorPair, KrausCollection, Method, OmegaPolicy, PDMatrix, PDPair, SolverConfig,
};

fn to_py_err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(PyValueError::new_err("matrix must have at least one row"));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows must be nonempty and equal length"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

fn pd_from_rows(rows: &[Vec<f64>]) -> PyResult<PDMatrix> {
    PDMatrix::from_matrix(rows_to_matrix(rows)?).map_err(to_py_err)
}

/// A Kraus operator collection (a problem instance).
#[pyclass(name = "Instance", from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: KrausCollection,
}

#[pymethods]
impl PyInstance {
    /// Builds an instance from a list of row-major matrices.
    #[new]
    #[pyo3(signature = (matrices, label=None))]
    fn new(matrices: Vec<Vec<Vec<f64>>>, label: Option<String>) -> PyResult<Self> {
        let mats = matrices
            .iter()
            .map(|rows| rows_to_matrix(rows))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyInstance {
            inner: KrausCollection::new(mats, label).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn label(&self) -> Option<String> {
        self.inner.label().map(|s| s.to_string())
    }

    /// The Kraus operators as nested row-major lists.
    fn matrices(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.matrices().iter().map(matrix_to_rows).collect()
    }

    fn save(&self, path: String) -> PyResult<()> {
        self.inner.save(path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: String) -> PyResult<Self> {
        Ok(PyInstance {
            inner: KrausCollection::load(path).map_err(to_py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(m={}, n={}, k={}, label={:?})",
            self.inner.m(),
            self.inner.n(),
            self.inner.k(),
            self.inner.label()
        )
    }
}

/// Gaussian frame instance embedded as rank-one Kraus operators.
#[pyfunction]
fn gen_frame(n: usize, k: usize, seed: u64) -> PyResult<PyInstance> {
    let frame = core::gen_frame_instance(n, k, seed).map_err(to_py_err)?;
    Ok(PyInstance {
        inner: core::frame_to_kraus(&frame).map_err(to_py_err)?,
    })
}

/// Rotated Hilbert-matrix instance (ill conditioned).
#[pyfunction]
fn gen_hilbert(n: usize, k: usize, seed: u64) -> PyResult<PyInstance> {
    Ok(PyInstance {
        inner: core::gen_hilbert_instance(n, k, seed).map_err(to_py_err)?,
    })
}

/// Dense i.i.d. Gaussian instance.
#[pyfunction]
fn gen_gaussian(m: usize, n: usize, k: usize, seed: u64) -> PyResult<PyInstance> {
    Ok(PyInstance {
        inner: core::gen_gaussian_instance(m, n, k, seed).map_err(to_py_err)?,
    })
}

/// Runs a solver and returns a dict with the trace and outcome.
///
/// `omega` fixes the relaxation parameter; `adaptive_p` activates the
/// adaptive policy instead (the two are mutually exclusive). Methods
/// `osi` and `ffpi` ignore the relaxation parameter.
#[pyfunction]
#[pyo3(signature = (instance, method="geodesic_or", omega=None, adaptive_p=None, adaptive_lag=2,
                    max_iter=200, tol=1e-13, safeguard=false))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    method: &str,
    omega: Option<f64>,
    adaptive_p: Option<usize>,
    adaptive_lag: usize,
    max_iter: usize,
    tol: f64,
    safeguard: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method.parse().map_err(to_py_err)?;
    let policy = match (omega, adaptive_p) {
        (Some(_), Some(_)) => {
            return Err(PyValueError::new_err(
                "pass either omega or adaptive_p, not both",
            ))
        }
        (Some(w), None) => OmegaPolicy::Fixed(w),
        (None, Some(p)) => OmegaPolicy::Adaptive { activation: p, lag: adaptive_lag },
        (None, None) => OmegaPolicy::Fixed(1.0),
    };
    let cfg = SolverConfig::new(method)
        .with_omega(policy)
        .with_max_iter(max_iter)
        .with_tol(tol)
        .with_safeguard(safeguard);
    cfg.validate().map_err(to_py_err)?;
    let outcome = core::solve(&instance.inner, &cfg).map_err(to_py_err)?;

    let out = PyDict::new(py);
    out.set_item("method", method.to_string())?;
    out.set_item("status", outcome.trace.status.as_str())?;
    out.set_item("iterations", outcome.trace.iterations())?;
    out.set_item("errs", outcome.trace.errs())?;
    out.set_item(
        "omegas",
        outcome.trace.records.iter().map(|r| r.omega).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "wall_nanos",
        outcome.trace.records.iter().map(|r| r.wall_nanos).collect::<Vec<_>>(),
    )?;
    out.set_item("omega_hat", outcome.trace.omega_hat.map(|o| o.omega))?;
    out.set_item("beta_sq_hat", outcome.trace.omega_hat.map(|o| o.beta_sq))?;
    out.set_item("final_err", outcome.trace.final_err())?;
    out.set_item("l", matrix_to_rows(outcome.factors.l()))?;
    out.set_item("r", matrix_to_rows(outcome.factors.r()))?;
    Ok(out)
}

/// Gradient-norm error of the scaled collection `L A Rᵀ`.
#[pyfunction]
fn gradient_norm(instance: &PyInstance, l: Vec<Vec<f64>>, r: Vec<Vec<f64>>) -> PyResult<f64> {
    let factors =
        FactorPair::new(rows_to_matrix(&l)?, rows_to_matrix(&r)?).map_err(to_py_err)?;
    core::gradient_norm(&instance.inner, &factors).map_err(to_py_err)
}

/// The scaling cost `tr(X Φ(Y)) − (1/m) log det X − (1/n) log det Y`.
#[pyfunction]
fn cost(instance: &PyInstance, x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<f64> {
    let pair = PDPair::new(pd_from_rows(&x)?, pd_from_rows(&y)?);
    core::cost(&instance.inner, &pair).map_err(to_py_err)
}

/// Hilbert projective distance between two positive definite matrices.
#[pyfunction]
fn hilbert_distance(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<f64> {
    core::hilbert_distance(&pd_from_rows(&x)?, &pd_from_rows(&y)?).map_err(to_py_err)
}

/// Weighted geodesic of the positive definite cone.
#[pyfunction]
fn geodesic(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, omega: f64) -> PyResult<Vec<Vec<f64>>> {
    let g = core::geodesic(&pd_from_rows(&x)?, &pd_from_rows(&y)?, omega).map_err(to_py_err)?;
    Ok(matrix_to_rows(g.as_matrix()))
}

/// Predicted asymptotic rate of the relaxed iteration.
#[pyfunction]
fn predicted_rate(omega: f64, beta_sq: f64) -> PyResult<f64> {
    core::predicted_rate(omega, beta_sq).map_err(to_py_err)
}

/// The rate-optimal relaxation parameter `2 / (1 + sqrt(1 − β²))`.
#[pyfunction]
fn optimal_omega(beta_sq: f64) -> PyResult<f64> {
    core::optimal_omega(beta_sq).map_err(to_py_err)
}

/// Instance diagnostics: sampled positivity check, contraction factors and
/// the implied safe relaxation range.
#[pyfunction]
#[pyo3(signature = (instance, trials=200, seed=1))]
fn check<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let verdict = core::check_positivity_improving(&instance.inner, trials, seed);
    let (l1, l2) = core::sample_contraction(&instance.inner, trials.max(1), seed).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("positivity_improving", verdict.is_likely_yes())?;
    match verdict {
        core::PositivityCheck::Counterexample(v) => {
            out.set_item("counterexample", v.iter().copied().collect::<Vec<f64>>())?
        }
        core::PositivityCheck::LikelyYes => out.set_item("counterexample", py.None())?,
    }
    out.set_item("lambda1_hat", l1)?;
    out.set_item("lambda2_hat", l2)?;
    out.set_item("safe_omega_upper_bound", 2.0 / (1.0 + (l1 * l2).sqrt()))?;
    Ok(out)
}

#[pymodule]
fn opscale_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(gen_frame, m)?)?;
    m.add_function(wrap_pyfunction!(gen_hilbert, m)?)?;
    m.add_function(wrap_pyfunction!(gen_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_norm, m)?)?;
    m.add_function(wrap_pyfunction!(cost, m)?)?;
    m.add_function(wrap_pyfunction!(hilbert_distance, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_rate, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_omega, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
