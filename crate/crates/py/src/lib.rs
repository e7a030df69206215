//! Python bindings. Vectors cross the boundary as lists of floats and sample
//! sets as lists of rows.

use std::path::Path;

use flowguide::metrics;
use flowguide::runner::{self, RunOptions};
use flowguide::{Condition, Error, IntegratorKind, Preset};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::NonFiniteState { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn integrator(name: &str) -> PyResult<IntegratorKind> {
    match name {
        "euler" => Ok(IntegratorKind::Euler),
        "heun" => Ok(IntegratorKind::Heun),
        _ => Err(PyValueError::new_err(format!("unknown integrator `{name}`, expected euler or heun"))),
    }
}

#[pyclass(name = "MixtureSpec", module = "flowguide", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMixtureSpec {
    inner: flowguide::MixtureSpec,
}

impl PyMixtureSpec {
    fn point(&self, x: Vec<f64>) -> PyResult<DVector<f64>> {
        if x.len() != self.inner.dim() {
            return Err(to_py_err(Error::DimensionMismatch { expected: self.inner.dim(), got: x.len() }));
        }
        Ok(DVector::from_vec(x))
    }
}

#[pymethods]
impl PyMixtureSpec {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        flowguide::MixtureSpec::from_json(text).map(|inner| Self { inner }).map_err(to_py_err)
    }

    /// One of `two-class-2d`, `eight-class-8d`, `shared-mean-null`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let p: Preset = name.parse().map_err(to_py_err)?;
        Ok(Self { inner: flowguide::presets::build(p) })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().map(String::from).collect()
    }

    /// Exact velocity at `(x, t)`. `label=None` gives the unconditional one.
    #[pyo3(signature = (x, t, label=None))]
    fn velocity(&self, x: Vec<f64>, t: f64, label: Option<&str>) -> PyResult<Vec<f64>> {
        let cond = label.map_or(Condition::Unconditional, Condition::Class);
        let v = self.inner.velocity(cond, &self.point(x)?, t).map_err(to_py_err)?;
        Ok(v.iter().copied().collect())
    }

    /// Dict with `v_u`, `v_c`, `delta` and `ratio` (None where undefined).
    fn velocity_pair<'py>(&self, py: Python<'py>, label: &str, x: Vec<f64>, t: f64) -> PyResult<Bound<'py, PyDict>> {
        let p = self.inner.velocity_pair(label, &self.point(x)?, t).map_err(to_py_err)?;
        let d = PyDict::new(py);
        d.set_item("v_u", p.v_u.iter().copied().collect::<Vec<_>>())?;
        d.set_item("v_c", p.v_c.iter().copied().collect::<Vec<_>>())?;
        d.set_item("delta", p.delta.iter().copied().collect::<Vec<_>>())?;
        d.set_item("ratio", p.ratio.value())?;
        Ok(d)
    }

    fn initial_ratio(&self, label: &str, x1: Vec<f64>) -> PyResult<f64> {
        self.inner.initial_ratio_closed_form(label, &self.point(x1)?).map_err(to_py_err)
    }

    #[pyo3(signature = (n, seed, label=None))]
    fn sample_data(&self, n: usize, seed: u64, label: Option<&str>) -> PyResult<Vec<Vec<f64>>> {
        let cond = label.map_or(Condition::Unconditional, Condition::Class);
        self.inner.sample_data(cond, n, seed).map(|m| rows(&m)).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("MixtureSpec(dim={}, labels={:?})", self.inner.dim(), self.labels())
    }
}

#[pyclass(name = "GuidanceSchedule", module = "flowguide", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyGuidanceSchedule {
    inner: flowguide::GuidanceSchedule,
}

fn checked(inner: flowguide::GuidanceSchedule) -> PyResult<PyGuidanceSchedule> {
    inner.validate().map_err(to_py_err)?;
    Ok(PyGuidanceSchedule { inner })
}

#[pymethods]
impl PyGuidanceSchedule {
    #[staticmethod]
    fn constant(w: f64) -> PyResult<Self> {
        checked(flowguide::GuidanceSchedule::Constant { w })
    }

    #[staticmethod]
    fn raag(w_max: f64, alpha: f64) -> PyResult<Self> {
        checked(flowguide::GuidanceSchedule::Raag { w_max, alpha })
    }

    #[staticmethod]
    fn table(entries: Vec<f64>) -> PyResult<Self> {
        checked(flowguide::GuidanceSchedule::Table { entries })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        checked(inner)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("schedules serialize")
    }

    /// Scale at `step` given the ratio there (None for an undefined ratio).
    #[pyo3(signature = (step, ratio=None))]
    fn scale(&self, step: usize, ratio: Option<f64>) -> PyResult<f64> {
        let r = ratio.map_or(flowguide::Ratio::Undefined, flowguide::Ratio::Defined);
        self.inner.scale_at(step, r).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("GuidanceSchedule({})", self.inner.describe())
    }
}

/// Integrates one reverse trajectory from `x1` at t=1 to t=0.
#[pyfunction]
#[pyo3(signature = (spec, label, schedule, n_steps, x1, integrator="euler"))]
fn sample<'py>(
    py: Python<'py>,
    spec: &PyMixtureSpec,
    label: &str,
    schedule: &PyGuidanceSchedule,
    n_steps: usize,
    x1: Vec<f64>,
    integrator: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = self::integrator(integrator)?;
    let x1 = spec.point(x1)?;
    let traj = py
        .detach(|| flowguide::sample(&spec.inner, label, &schedule.inner, n_steps, kind, &x1))
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("times", &traj.times)?;
    d.set_item("states", traj.states.iter().map(|s| s.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())?;
    d.set_item("ratios", traj.ratios.iter().map(|r| r.value()).collect::<Vec<_>>())?;
    d.set_item("scales", &traj.scales)?;
    Ok(d)
}

#[pyfunction]
fn energy_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    metrics::energy_distance(&matrix(&a)?, &matrix(&b)?).map_err(to_py_err)
}

/// Fits `w = 1 + (w_max - 1) exp(-alpha rho)` to `(rho, w)` pairs.
#[pyfunction]
fn fit_exponential<'py>(py: Python<'py>, pairs: Vec<(f64, f64)>) -> PyResult<Bound<'py, PyDict>> {
    let f = flowguide::fit_exponential(&pairs).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("w_max_hat", f.w_max_hat)?;
    d.set_item("alpha_hat", f.alpha_hat)?;
    d.set_item("rmse_log", f.rmse_log)?;
    d.set_item("n_points_used", f.n_points_used)?;
    d.set_item("n_points_excluded", f.n_points_excluded)?;
    Ok(d)
}

/// Runs an experiment config file and returns the written file paths and
/// the config hash.
#[pyfunction]
#[pyo3(signature = (config_path, force=false, dump_states=false))]
fn run_config<'py>(py: Python<'py>, config_path: &str, force: bool, dump_states: bool) -> PyResult<Bound<'py, PyDict>> {
    let opts = RunOptions { force, dump_states };
    let out = py
        .detach(|| runner::run_file(Path::new(config_path), opts))
        .map_err(|e| {
            if e.exit_code() == 2 {
                PyValueError::new_err(e.to_json())
            } else {
                PyRuntimeError::new_err(e.to_json())
            }
        })?;
    let d = PyDict::new(py);
    d.set_item("out_dir", out.out_dir.display().to_string())?;
    d.set_item("files", out.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())?;
    d.set_item("config_hash", out.config_hash)?;
    d.set_item("summary", out.summary_line)?;
    Ok(d)
}

#[pymodule(name = "flowguide")]
pub fn flowguide_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixtureSpec>()?;
    m.add_class::<PyGuidanceSchedule>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(energy_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
