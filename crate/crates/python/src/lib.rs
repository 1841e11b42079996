//! Python bindings for `fermi_echo`.
//!
//! Long computations release the GIL. Invalid parameters raise
//! `ValueError`; failures during a computation raise `RuntimeError`.

use fermi_echo::echo::{echo_fock_oracle, EchoError, TimeGrid};
use fermi_echo::nonmarkov::{self, VolumeSeries};
use fermi_echo::sweep::{self as runs, default_grid, Axis, Method, RunError, RunRecord, RunSpec, SweepSpec};
use fermi_echo::trap_gas::{self, build_model, TrapGasConfig, TrapGasError};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_error(e: RunError) -> PyErr {
    if e.is_validation() {
        value_error(e)
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn echo_error(e: EchoError) -> PyErr {
    match e {
        EchoError::NonFinite { .. } | EchoError::Eigen => PyRuntimeError::new_err(e.to_string()),
        _ => value_error(e),
    }
}

/// Ideal Fermi gas in a one-dimensional harmonic trap.
#[pyclass(name = "TrapGas", module = "fermi_echo_py", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyTrapGas {
    inner: TrapGasConfig,
}

#[pymethods]
impl PyTrapGas {
    #[new]
    #[pyo3(signature = (n_fermions, beta, omega = 1.0, spin_degeneracy = 2, cutoff = None))]
    fn new(n_fermions: usize, beta: f64, omega: f64, spin_degeneracy: usize, cutoff: Option<usize>) -> PyResult<Self> {
        let inner = TrapGasConfig {
            omega,
            n_fermions,
            spin_degeneracy,
            beta,
            cutoff: cutoff.unwrap_or_else(|| trap_gas::default_cutoff(n_fermions, spin_degeneracy.max(1))),
        };
        inner.validate().map_err(value_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_fermions(&self) -> usize {
        self.inner.n_fermions
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }

    #[getter]
    fn spin_degeneracy(&self) -> usize {
        self.inner.spin_degeneracy
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff
    }

    fn fermi_energy(&self) -> f64 {
        self.inner.fermi_energy()
    }

    /// Chemical potential and per-mode occupations.
    fn thermal_state(&self) -> PyResult<(f64, Vec<f64>)> {
        let state = trap_gas::solve_chemical_potential(&self.inner).map_err(value_error)?;
        Ok((state.mu, state.occupations))
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "TrapGas(n_fermions={}, beta={:?}, omega={:?}, spin_degeneracy={}, cutoff={})",
            c.n_fermions, c.beta, c.omega, c.spin_degeneracy, c.cutoff
        )
    }
}

/// Outcome of a single run.
#[pyclass(name = "RunResult", module = "fermi_echo_py", frozen)]
struct PyRunResult {
    record: RunRecord,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.record.echo.times()
    }

    #[getter]
    fn nu(&self) -> Vec<Complex64> {
        self.record.echo.values.clone()
    }

    #[getter]
    fn volumes(&self) -> Vec<f64> {
        self.record.volumes.volumes.clone()
    }

    #[getter]
    fn n_v(&self) -> f64 {
        self.record.report.n_v
    }

    #[getter]
    fn n_plus(&self) -> Vec<f64> {
        self.record.report.n_plus.clone()
    }

    #[getter]
    fn n_minus(&self) -> Vec<f64> {
        self.record.report.n_minus.clone()
    }

    #[getter]
    fn ratio(&self) -> Vec<f64> {
        self.record.report.ratio.clone()
    }

    #[getter]
    fn expansion_intervals(&self) -> Vec<(f64, f64)> {
        self.record.report.expansion_intervals.clone()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.record.mu
    }

    #[getter]
    fn v0(&self) -> f64 {
        self.record.v0
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.record.spec.method.as_str()
    }

    #[getter]
    fn wall_time(&self) -> f64 {
        self.record.wall_time
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(method={}, alpha={:?}, n_v={:?}, samples={})",
            self.record.spec.method.as_str(),
            self.record.spec.alpha,
            self.record.report.n_v,
            self.record.echo.values.len()
        )
    }
}

fn run_spec(
    gas: &PyTrapGas,
    alpha: f64,
    method: &str,
    t_max: Option<f64>,
    n_steps: Option<usize>,
) -> PyResult<RunSpec> {
    let method: Method = method.parse().map_err(PyValueError::new_err)?;
    if !(gas.inner.omega.is_finite() && gas.inner.omega > 0.0) {
        return Err(value_error(TrapGasError::Omega(gas.inner.omega)));
    }
    let defaults = default_grid(gas.inner.omega);
    let grid = TimeGrid {
        t_max: t_max.unwrap_or(defaults.t_max),
        n_steps: n_steps.unwrap_or(defaults.n_steps),
    };
    let spec = RunSpec::new(gas.inner, alpha).with_method(method).with_grid(grid);
    spec.validate().map_err(value_error)?;
    Ok(spec)
}

/// ψ_n(0) for n < cutoff.
#[pyfunction]
fn psi0_table(cutoff: usize) -> PyResult<Vec<f64>> {
    trap_gas::psi0_table(cutoff).map_err(value_error)
}

/// V₀ for a given α = V₀² / (ω ε_F).
#[pyfunction]
fn coupling_from_alpha(alpha: f64, omega: f64, n_fermions: usize) -> PyResult<f64> {
    trap_gas::coupling_from_alpha(alpha, omega, n_fermions).map_err(value_error)
}

#[pyfunction]
fn alpha_from_coupling(v0: f64, omega: f64, n_fermions: usize) -> f64 {
    trap_gas::alpha_from_coupling(v0, omega, n_fermions)
}

/// Full pipeline for one parameter point.
#[pyfunction]
#[pyo3(signature = (gas, alpha, method = "exact", t_max = None, n_steps = None))]
fn run_point(
    py: Python<'_>,
    gas: PyTrapGas,
    alpha: f64,
    method: &str,
    t_max: Option<f64>,
    n_steps: Option<usize>,
) -> PyResult<PyRunResult> {
    let spec = run_spec(&gas, alpha, method, t_max, n_steps)?;
    let record = py.detach(|| runs::run_point(&spec)).map_err(run_error)?;
    Ok(PyRunResult { record })
}

/// ν(t) on the grid `linspace(0, t_max, n_steps)`.
#[pyfunction]
#[pyo3(signature = (gas, alpha, method = "exact", t_max = None, n_steps = None))]
fn echo(
    py: Python<'_>,
    gas: PyTrapGas,
    alpha: f64,
    method: &str,
    t_max: Option<f64>,
    n_steps: Option<usize>,
) -> PyResult<Vec<Complex64>> {
    run_point(py, gas, alpha, method, t_max, n_steps).map(|r| r.record.echo.values)
}

/// ν(t) from an explicit many-body trace; one spin channel, at most 12 modes.
#[pyfunction]
fn echo_fock(py: Python<'_>, gas: PyTrapGas, v0: f64, t_max: f64, n_steps: usize) -> PyResult<Vec<Complex64>> {
    let grid = TimeGrid::new(t_max, n_steps).map_err(echo_error)?;
    let model = build_model(&gas.inner, v0).map_err(value_error)?;
    let series = py
        .detach(|| echo_fock_oracle(&model, &gas.inner, &grid))
        .map_err(echo_error)?;
    Ok(series.values)
}

fn volume_series(volumes: Vec<f64>, t_max: f64) -> PyResult<VolumeSeries> {
    let grid = TimeGrid::new(t_max, volumes.len()).map_err(echo_error)?;
    VolumeSeries::new(grid, volumes).map_err(value_error)
}

/// Total positive variation of a sampled volume series.
#[pyfunction]
#[pyo3(signature = (volumes, t_max = 1.0))]
fn measure_nv(volumes: Vec<f64>, t_max: f64) -> PyResult<f64> {
    Ok(nonmarkov::measure_nv(&volume_series(volumes, t_max)?))
}

/// Running N₊, N₋ and R = N₊ / N₋ of a sampled volume series.
#[pyfunction]
#[pyo3(signature = (volumes, t_max = 1.0))]
fn accumulate_pm(volumes: Vec<f64>, t_max: f64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let report = nonmarkov::accumulate_pm(&volume_series(volumes, t_max)?);
    Ok((report.n_plus, report.n_minus, report.ratio))
}

/// Scans `axis` over `values`; returns `(value, N_V or None)` per point in
/// input order, `None` marking a point that failed.
#[pyfunction]
#[pyo3(signature = (gas, alpha, axis, values, method = "exact", t_max = None, n_steps = None, parallelism = 1))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    gas: PyTrapGas,
    alpha: f64,
    axis: &str,
    values: Vec<f64>,
    method: &str,
    t_max: Option<f64>,
    n_steps: Option<usize>,
    parallelism: usize,
) -> PyResult<Vec<(f64, Option<f64>)>> {
    let spec = SweepSpec {
        base: run_spec(&gas, alpha, method, t_max, n_steps)?,
        axis: axis.parse::<Axis>().map_err(PyValueError::new_err)?,
        values,
        parallelism,
    };
    let points = py.detach(|| runs::sweep(&spec)).map_err(|e| match e {
        runs::SweepError::Spec(e) => value_error(e),
        runs::SweepError::Pool(e) => PyRuntimeError::new_err(e.to_string()),
    })?;
    Ok(points
        .into_iter()
        .map(|p| (p.axis_value, p.outcome.ok().map(|r| r.report.n_v)))
        .collect())
}

#[pymodule]
fn fermi_echo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrapGas>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(psi0_table, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_from_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_from_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(run_point, m)?)?;
    m.add_function(wrap_pyfunction!(echo, m)?)?;
    m.add_function(wrap_pyfunction!(echo_fock, m)?)?;
    m.add_function(wrap_pyfunction!(measure_nv, m)?)?;
    m.add_function(wrap_pyfunction!(accumulate_pm, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
