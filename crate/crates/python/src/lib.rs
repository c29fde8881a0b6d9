//! Python bindings: instances, solving, evaluation and the biped model.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use legbench::benchmark::{
    self, evaluate_solution, generate_instances, solve_instance, Algorithm, Condition,
    GeneratorConfig, MethodConfig, ProblemInstance, SolutionFile, SolverMeta, Task, TOLERANCE,
};
use legbench::robot::{Biped, DOF};
use legbench::report::SolveReport;
use legbench::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

pub fn parse_condition(s: &str) -> Result<Condition, Error> {
    match s {
        "good" => Ok(Condition::Good),
        "in_collision" => Ok(Condition::InCollision),
        _ => Err(Error::InvalidConfig(format!("unknown condition `{s}`"))),
    }
}

pub fn method_config(method: &str, fraction: Option<f64>, seed: u64) -> Result<MethodConfig, Error> {
    let alg: Algorithm = method.parse()?;
    let mut m = MethodConfig::new(alg);
    if let Some(f) = fraction {
        m.fraction = f;
    }
    m.seed = seed;
    m.validate()?;
    Ok(m)
}

/// A posture or trajectory problem instance.
#[pyclass(name = "Instance", module = "legbench", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyInstance {
    pub inner: ProblemInstance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ProblemInstance =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn task(&self) -> &'static str {
        match self.inner.task {
            Task::Posture => "posture",
            Task::Trajectory => "trajectory",
        }
    }

    #[getter]
    fn n_stances(&self) -> usize {
        self.inner.stances.len()
    }

    #[getter]
    fn waypoint_count(&self) -> usize {
        self.inner.waypoint_count()
    }

    fn __repr__(&self) -> String {
        format!("Instance(id={:?}, task={:?}, stances={})", self.inner.id, self.task(), self.n_stances())
    }
}

fn report_dict<'py>(py: Python<'py>, r: &SolveReport, waypoints: &[Vec<f64>]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("success", r.success)?;
    d.set_item("cost", r.cost)?;
    d.set_item("max_violation", r.max_violation)?;
    d.set_item("time_s", r.time_s)?;
    d.set_item("restarts_used", r.restarts_used)?;
    d.set_item("waypoints", waypoints.to_vec())?;
    Ok(d)
}

/// Generates `n_posture` posture and `n_trajectory` trajectory instances.
#[pyfunction]
#[pyo3(signature = (seed=42, n_posture=50, n_trajectory=50))]
fn generate(py: Python<'_>, seed: u64, n_posture: usize, n_trajectory: usize) -> PyResult<Vec<PyInstance>> {
    let config = GeneratorConfig {
        n_posture,
        n_trajectory,
        ..GeneratorConfig::new(seed)
    };
    let insts = py.detach(|| generate_instances(&config, 1)).map_err(to_py)?;
    Ok(insts.into_iter().map(|inner| PyInstance { inner }).collect())
}

/// Loads every instance listed in a suite directory's manifest.
#[pyfunction]
fn load_suite(dir: PathBuf) -> PyResult<Vec<PyInstance>> {
    let insts = benchmark::load_suite(&dir).map_err(to_py)?;
    Ok(insts.into_iter().map(|inner| PyInstance { inner }).collect())
}

/// Solves one instance; returns a dict with success, cost, max_violation,
/// time_s, restarts_used and waypoints.
#[pyfunction]
#[pyo3(signature = (instance, method, condition="good", multistarts=10, fraction=None, seed=0))]
fn solve<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    method: &str,
    condition: &str,
    multistarts: usize,
    fraction: Option<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = method_config(method, fraction, seed).map_err(to_py)?;
    let c = parse_condition(condition).map_err(to_py)?;
    let out = py
        .detach(|| solve_instance(&m, &instance.inner, c, multistarts))
        .map_err(to_py)?;
    report_dict(py, &out.report, &out.waypoints)
}

/// Scores waypoints against an instance with the official evaluator.
#[pyfunction]
#[pyo3(signature = (instance, waypoints, tolerance=TOLERANCE))]
fn evaluate<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    waypoints: Vec<Vec<f64>>,
    tolerance: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let sol = SolutionFile {
        instance_id: instance.inner.id.clone(),
        waypoints,
        solver: SolverMeta {
            name: "external".into(),
            seed: 0,
            restarts: 0,
            time_s: 0.0,
        },
    };
    let r = evaluate_solution(&instance.inner, &sol, tolerance).map_err(to_py)?;
    report_dict(py, &r, &sol.waypoints)
}

fn configuration(q: &[f64]) -> PyResult<&[f64]> {
    if q.len() != DOF {
        return Err(PyValueError::new_err(format!("expected {DOF} values, got {}", q.len())));
    }
    Ok(q)
}

/// Named frames `(name, x, y, angle)` of the biped at `q`.
#[pyfunction]
fn forward_kinematics(q: Vec<f64>) -> PyResult<Vec<(String, f64, f64, f64)>> {
    let q = configuration(&q)?;
    Ok(Biped::default()
        .forward_kinematics(q)
        .into_iter()
        .map(|f| (f.name, f.origin[0], f.origin[1], f.angle))
        .collect())
}

/// Static gravity torques of the six leg joints.
#[pyfunction]
fn gravity_torques(q: Vec<f64>) -> PyResult<Vec<f64>> {
    let q = configuration(&q)?;
    Ok(Biped::default().gravity_torques(q).0.to_vec())
}

/// Method keys accepted by `solve`.
#[pyfunction]
fn methods() -> Vec<&'static str> {
    Algorithm::ALL.iter().map(|a| a.key()).collect()
}

#[pymodule]
#[pyo3(name = "legbench")]
fn legbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(load_suite, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(forward_kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(gravity_torques, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    m.add("DOF", DOF)?;
    Ok(())
}
