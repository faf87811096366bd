//! Python bindings: geometry, dynamics, scenarios, closed-loop runs and the
//! trace verifier.

use asta::dynamics::{self, AgentState, ControlInput};
use asta::geometry::{self, Vec2};
use asta::harness::metrics::compute_metrics;
use asta::harness::scenario::{self, Scenario};
use asta::harness::verify::verify_trace;
use asta::runtime::trace::{EndReason, TraceLog};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Polygon", frozen)]
struct PyPolygon(geometry::Polygon);

#[pymethods]
impl PyPolygon {
    #[new]
    fn new(vertices: Vec<(f64, f64)>) -> PyResult<Self> {
        let v = vertices.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
        geometry::Polygon::new(v).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn regular(sides: usize, apothem: f64) -> PyResult<Self> {
        geometry::Polygon::regular(sides, apothem).map(Self).map_err(value_err)
    }

    fn vertices(&self) -> Vec<(f64, f64)> {
        self.0.vertices().iter().map(|v| (v.x, v.y)).collect()
    }

    /// Copy moved to `position` and rotated by `heading`.
    #[pyo3(signature = (x, y, heading = 0.0))]
    fn placed(&self, x: f64, y: f64, heading: f64) -> Self {
        Self(geometry::transform_footprint(&self.0, Vec2::new(x, y), heading))
    }

    fn intersects(&self, other: &PyPolygon) -> bool {
        geometry::polygons_intersect(&self.0, &other.0)
    }

    fn distance(&self, other: &PyPolygon) -> f64 {
        geometry::gjk_proximity(&self.0, &other.0).distance
    }

    /// Half space `(normal, offset)` holding this polygon and excluding
    /// `other`, or `None` when the two are too close to separate.
    fn separating_hyperplane(&self, other: &PyPolygon) -> Option<((f64, f64), f64)> {
        geometry::separating_hyperplane(&self.0, &other.0)
            .ok()
            .map(|h| ((h.normal.x, h.normal.y), h.offset))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Polygon({} vertices)", self.0.len())
    }
}

#[pyclass(name = "DynamicsModel", frozen)]
struct PyDynamicsModel(dynamics::DynamicsModel);

#[pymethods]
impl PyDynamicsModel {
    #[staticmethod]
    fn double_integrator(v_max: f64, a_max: f64) -> PyResult<Self> {
        dynamics::DynamicsModel::double_integrator(v_max, a_max).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn unicycle(v_max: f64, a_max: f64, omega_max: f64) -> PyResult<Self> {
        dynamics::DynamicsModel::unicycle(v_max, a_max, omega_max).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn bicycle(v_max: f64, a_max: f64, delta_max: f64, wheelbase: f64) -> PyResult<Self> {
        dynamics::DynamicsModel::bicycle(v_max, a_max, delta_max, wheelbase).map(Self).map_err(value_err)
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.0.kind)
    }

    /// One RK4 step; states leaving the admissible set are clamped.
    fn step(&self, state: [f64; 4], input: [f64; 2], h: f64) -> PyResult<[f64; 4]> {
        let (next, _) = dynamics::step(&self.0, &AgentState(state), &ControlInput(input), h).map_err(value_err)?;
        Ok(next.0)
    }

    fn is_equilibrium(&self, state: [f64; 4]) -> bool {
        dynamics::is_equilibrium(&self.0, &AgentState(state))
    }
}

#[pyclass(name = "Scenario", frozen)]
struct PyScenario(Scenario);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Scenario::parse(text).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        scenario::load_scenario(path).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn antipodal8() -> Self {
        Self(scenario::antipodal8())
    }

    #[staticmethod]
    fn random(seed: u64) -> Self {
        Self(scenario::random_scenario(seed))
    }

    fn agent_ids(&self) -> Vec<u32> {
        self.0.agents.iter().map(|a| a.id).collect()
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.0.settings.t_max
    }

    /// Runs the closed loop in virtual time.
    #[pyo3(signature = (seed = None, t_max = None))]
    fn run(&self, py: Python<'_>, seed: Option<u64>, t_max: Option<f64>) -> PyResult<PyRunResult> {
        let seed = seed.unwrap_or(self.0.settings.seed);
        let t_max = t_max.unwrap_or(self.0.settings.t_max);
        let sc = &self.0;
        let result = py.detach(|| asta::runtime::run(sc, seed, t_max)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(PyRunResult { trace: result.trace, reason: result.reason, end_time: result.end_time })
    }

    fn __repr__(&self) -> String {
        format!("Scenario({} agents)", self.0.agents.len())
    }
}

#[pyclass(name = "RunResult", frozen)]
struct PyRunResult {
    trace: TraceLog,
    reason: EndReason,
    end_time: f64,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn arrived(&self) -> bool {
        self.reason == EndReason::Arrived
    }

    #[getter]
    fn end_time(&self) -> f64 {
        self.end_time
    }

    #[getter]
    fn trace(&self) -> String {
        self.trace.to_text()
    }

    fn verify<'py>(&self, py: Python<'py>, scenario: &PyScenario) -> PyResult<Bound<'py, PyAny>> {
        let report = verify_trace(&self.trace, &scenario.0).map_err(value_err)?;
        to_py(py, &report)
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let m = compute_metrics(&self.trace).map_err(value_err)?;
        to_py(py, &m)
    }

    fn __repr__(&self) -> String {
        format!("RunResult(reason={:?}, end_time={:.3})", self.reason, self.end_time)
    }
}

/// Verification report of a trace in text form.
#[pyfunction]
fn verify<'py>(py: Python<'py>, trace: &str, scenario: &PyScenario) -> PyResult<Bound<'py, PyAny>> {
    let log = TraceLog::parse(trace).map_err(value_err)?;
    let report = verify_trace(&log, &scenario.0).map_err(value_err)?;
    to_py(py, &report)
}

/// Metrics of a trace in text form.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, trace: &str) -> PyResult<Bound<'py, PyAny>> {
    let log = TraceLog::parse(trace).map_err(value_err)?;
    to_py(py, &compute_metrics(&log).map_err(value_err)?)
}

#[pymodule]
fn asta_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolygon>()?;
    m.add_class::<PyDynamicsModel>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
