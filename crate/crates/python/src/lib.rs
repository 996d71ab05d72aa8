//! Python bindings for `hybrid_doa`.

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hybrid_doa::array::{steering_vector, subarray_gain, Angle, ArrayGeometry};
use hybrid_doa::complexity::{complexity_model, Method};
use hybrid_doa::crlb::{digital_crlb, hybrid_crlb, CrlbInputs, CrlbReport};
use hybrid_doa::experiments::{estimate_once, trial_errors, RmseStats, ScenarioPoint};
use hybrid_doa::frontend::SignalModel;
use hybrid_doa::grid::{candidate_set_from_angle, physically_distinct, CandidateSource};
use hybrid_doa::DoaError;

fn to_py(e: DoaError) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(to_py)
}

/// Sub-connected uniform linear array with `k` subarrays of `m` elements.
#[pyclass(name = "ArrayGeometry", frozen)]
struct PyArrayGeometry {
    inner: ArrayGeometry,
}

#[pymethods]
impl PyArrayGeometry {
    #[new]
    #[pyo3(signature = (k, m, spacing = 0.5))]
    fn new(k: usize, m: usize, spacing: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ArrayGeometry::new(k, m, spacing).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.inner.n_elements()
    }

    #[getter]
    fn n_subarrays(&self) -> usize {
        self.inner.n_subarrays()
    }

    #[getter]
    fn elements_per_subarray(&self) -> usize {
        self.inner.elements_per_subarray()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    fn steering_vector(&self, theta_deg: f64) -> PyResult<Vec<Complex64>> {
        let theta = Angle::from_degrees(theta_deg).map_err(to_py)?;
        Ok(steering_vector(&self.inner, theta).iter().copied().collect())
    }

    fn subarray_gain(&self, theta_deg: f64) -> PyResult<Complex64> {
        Ok(subarray_gain(
            &self.inner,
            Angle::from_degrees(theta_deg).map_err(to_py)?,
        ))
    }

    /// Physically distinct directions sharing the virtual-array phase of `theta_deg`.
    fn candidate_set(&self, theta_deg: f64) -> PyResult<Vec<f64>> {
        let theta = Angle::from_degrees(theta_deg).map_err(to_py)?;
        let set = candidate_set_from_angle(&self.inner, theta, CandidateSource::DpaGrid);
        Ok(physically_distinct(&self.inner, &set)
            .iter()
            .map(|a| a.degrees())
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "ArrayGeometry(k={}, m={}, spacing={})",
            self.inner.n_subarrays(),
            self.inner.elements_per_subarray(),
            self.inner.spacing()
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn scenario(
    n: usize,
    k: usize,
    theta_deg: f64,
    snr_db: f64,
    snapshots: usize,
    step_deg: f64,
    signal_model: &str,
) -> PyResult<ScenarioPoint> {
    let p = ScenarioPoint {
        n_elements: n,
        n_subarrays: k,
        theta_deg,
        snr_db,
        snapshots,
        step_deg,
        signal_model: signal_model.parse::<SignalModel>().map_err(to_py)?,
        ..Default::default()
    };
    p.validate().map_err(to_py)?;
    Ok(p)
}

/// Runs one estimator on a simulated acquisition and returns its report.
#[pyfunction]
#[pyo3(signature = (method, n = 32, k = 16, theta_deg = 41.177, snr_db = 0.0, snapshots = 32, step_deg = 1.0, seed = 1, signal_model = "repeated-frame"))]
#[allow(clippy::too_many_arguments)]
fn estimate<'py>(
    py: Python<'py>,
    method: &str,
    n: usize,
    k: usize,
    theta_deg: f64,
    snr_db: f64,
    snapshots: usize,
    step_deg: f64,
    seed: u64,
    signal_model: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let p = scenario(n, k, theta_deg, snr_db, snapshots, step_deg, signal_model)?;
    let r = py.detach(|| estimate_once(&p, parse_method(method)?, seed).map_err(to_py))?;
    let d = PyDict::new(py);
    d.set_item("method", r.method.name())?;
    d.set_item("theta_hat_deg", r.theta_hat_deg())?;
    d.set_item("coarse_deg", r.coarse_angle.map(f64::to_degrees))?;
    d.set_item(
        "candidates_deg",
        r.candidates_examined.iter().map(|c| c.to_degrees()).collect::<Vec<_>>(),
    )?;
    d.set_item("objective_values", r.objective_values)?;
    d.set_item("blocks_consumed", r.blocks_consumed)?;
    d.set_item("flops", r.flops)?;
    Ok(d)
}

/// Monte Carlo RMSE (degrees) of one estimator.
#[pyfunction]
#[pyo3(signature = (method, trials, n = 32, k = 16, theta_deg = 41.177, snr_db = 0.0, snapshots = 32, step_deg = 1.0, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn rmse<'py>(
    py: Python<'py>,
    method: &str,
    trials: usize,
    n: usize,
    k: usize,
    theta_deg: f64,
    snr_db: f64,
    snapshots: usize,
    step_deg: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = scenario(n, k, theta_deg, snr_db, snapshots, step_deg, "repeated-frame")?;
    let m = parse_method(method)?;
    let s = py.detach(|| {
        trial_errors(&p, m, trials, seed)
            .map(|e| RmseStats::from_errors(&e))
            .map_err(to_py)
    })?;
    let d = PyDict::new(py);
    d.set_item("rmse_deg", s.rmse_deg)?;
    d.set_item("rmse_se_deg", s.rmse_se_deg)?;
    d.set_item("trials", s.trials)?;
    d.set_item("failures", s.failures)?;
    Ok(d)
}

fn crlb_dict<'py>(py: Python<'py>, r: &CrlbReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("analytic_fisher", r.analytic_fisher)?;
    d.set_item("numeric_fisher", r.numeric_fisher)?;
    d.set_item("relative_deviation", r.relative_deviation)?;
    d.set_item("variance", r.variance)?;
    d.set_item("rmse_deg", r.rmse_deg)?;
    Ok(d)
}

/// Cramér-Rao bound of the hybrid array.
#[pyfunction(name = "hybrid_crlb")]
#[pyo3(signature = (n, k, snr_db, theta_deg, snapshots, spacing = 0.5))]
fn py_hybrid_crlb<'py>(
    py: Python<'py>,
    n: usize,
    k: usize,
    snr_db: f64,
    theta_deg: f64,
    snapshots: usize,
    spacing: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let geom = ArrayGeometry::from_total(n, k, spacing).map_err(to_py)?;
    let theta = Angle::from_degrees(theta_deg).map_err(to_py)?;
    let inputs = CrlbInputs::new(geom, theta, 10f64.powf(snr_db / 10.0), snapshots).map_err(to_py)?;
    crlb_dict(py, &hybrid_crlb(&inputs).map_err(to_py)?)
}

/// Cramér-Rao bound of a fully digital `n`-element array.
#[pyfunction(name = "digital_crlb")]
#[pyo3(signature = (n, snr_db, theta_deg, snapshots, spacing = 0.5))]
fn py_digital_crlb<'py>(
    py: Python<'py>,
    n: usize,
    snr_db: f64,
    theta_deg: f64,
    snapshots: usize,
    spacing: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let theta = Angle::from_degrees(theta_deg).map_err(to_py)?;
    let r = digital_crlb(n, 10f64.powf(snr_db / 10.0), snapshots, theta, spacing).map_err(to_py)?;
    crlb_dict(py, &r)
}

/// FLOP count of one estimate.
#[pyfunction(name = "complexity")]
fn py_complexity(method: &str, q: u64, l: u64, k: u64, m: u64) -> PyResult<u128> {
    Ok(complexity_model(parse_method(method)?, q, l, k, m))
}

#[pymodule(name = "hybrid_doa")]
fn hybrid_doa_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyArrayGeometry>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(py_hybrid_crlb, m)?)?;
    m.add_function(wrap_pyfunction!(py_digital_crlb, m)?)?;
    m.add_function(wrap_pyfunction!(py_complexity, m)?)?;
    m.add("METHODS", Method::ALL.iter().map(|m| m.name()).collect::<Vec<_>>())?;
    Ok(())
}
