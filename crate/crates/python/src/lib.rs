//! Python bindings for the bang-bang control solvers.

use bangbang_core as core;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Config(_) | core::Error::Usage(_) | core::Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait PyResultExt<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> PyResultExt<T> for core::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Time-dependent coefficient: forcing, target or adjoint source.
#[pyclass(name = "ScalarField", module = "bangbang", from_py_object)]
#[derive(Clone)]
struct PyScalarField(core::ScalarField);

#[pymethods]
impl PyScalarField {
    #[staticmethod]
    fn constant(value: f64) -> Self {
        Self(core::ScalarField::constant(value))
    }

    /// `offset + amplitude * sin(frequency * t)`
    #[staticmethod]
    fn sinusoid(offset: f64, amplitude: f64, frequency: f64) -> Self {
        Self(core::ScalarField::sinusoid(offset, amplitude, frequency))
    }

    #[staticmethod]
    fn per_interval(values: Vec<f64>) -> Self {
        Self(core::ScalarField::per_interval(values))
    }

    /// Piecewise linear samples; a repeated time marks a jump.
    #[staticmethod]
    fn tabulated(times: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        core::ScalarField::tabulated(times, values).map(Self).py_err()
    }

    fn value(&self, t: f64, spec: &PyProblemSpec) -> f64 {
        self.0.value(t, spec.0.partition())
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Scalar linear ODE with a piecewise-constant binary control.
#[pyclass(name = "ProblemSpec", module = "bangbang", from_py_object)]
#[derive(Clone)]
struct PyProblemSpec(core::ProblemSpec);

#[pymethods]
impl PyProblemSpec {
    #[new]
    #[pyo3(signature = (decay, gain, ambient, initial, t_final, intervals, breakpoints=None))]
    fn new(
        decay: f64,
        gain: f64,
        ambient: f64,
        initial: f64,
        t_final: f64,
        intervals: usize,
        breakpoints: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let partition = match breakpoints {
            Some(b) => core::ControlPartition::new(b),
            None => core::ControlPartition::equal(t_final, intervals),
        }
        .py_err()?;
        let params = core::PhysicalParams { decay, gain, ambient, initial };
        core::ProblemSpec::new(params, partition).map(Self).py_err()
    }

    #[staticmethod]
    fn switching_benchmark() -> Self {
        Self(core::ProblemSpec::switching_benchmark())
    }

    #[staticmethod]
    fn sinusoid_tracking(intervals: usize) -> PyResult<Self> {
        core::ProblemSpec::sinusoid_tracking(intervals).map(Self).py_err()
    }

    fn with_target(&self, field: &PyScalarField) -> PyResult<Self> {
        self.0.clone().with_target(field.0.clone()).map(Self).py_err()
    }

    fn with_forcing(&self, field: &PyScalarField) -> PyResult<Self> {
        self.0.clone().with_forcing(field.0.clone()).map(Self).py_err()
    }

    fn with_adjoint_source(&self, field: &PyScalarField) -> PyResult<Self> {
        self.0.clone().with_adjoint_source(field.0.clone()).map(Self).py_err()
    }

    #[getter]
    fn decay(&self) -> f64 {
        self.0.decay()
    }

    #[getter]
    fn gain(&self) -> f64 {
        self.0.gain()
    }

    #[getter]
    fn ambient(&self) -> f64 {
        self.0.ambient()
    }

    #[getter]
    fn initial(&self) -> f64 {
        self.0.initial()
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.0.t_final()
    }

    #[getter]
    fn intervals(&self) -> usize {
        self.0.interval_count()
    }

    #[getter]
    fn breakpoints(&self) -> Vec<f64> {
        self.0.partition().breakpoints().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "ProblemSpec(decay={}, gain={}, ambient={}, initial={}, t_final={}, intervals={})",
            self.0.decay(),
            self.0.gain(),
            self.0.ambient(),
            self.0.initial(),
            self.0.t_final(),
            self.0.interval_count()
        )
    }
}

fn interface_mode(mode: &str, jumps: Option<Vec<f64>>) -> PyResult<core::InterfaceMode> {
    match (mode, jumps) {
        ("continuous", None) => Ok(core::InterfaceMode::Continuous),
        ("augmented", None) => Ok(core::InterfaceMode::Augmented),
        ("prescribed", Some(q)) => Ok(core::InterfaceMode::Prescribed(q)),
        ("prescribed", None) => Err(PyValueError::new_err("mode 'prescribed' needs jumps")),
        (other, _) => Err(PyValueError::new_err(format!(
            "mode must be 'continuous', 'augmented' or 'prescribed' (jumps only with 'prescribed'), got '{other}'"
        ))),
    }
}

fn state_for(
    spec: &core::ProblemSpec,
    v: &[f64],
    mesh: &core::TimeMesh,
    scheme: &str,
    mode: core::InterfaceMode,
) -> PyResult<core::TrajectorySolution> {
    match scheme {
        "iim" => core::solve_state_iim(spec, v, mesh, &mode).py_err(),
        "euler" => core::solve_state_euler(spec, v, mesh).py_err(),
        other => Err(PyValueError::new_err(format!("scheme must be 'iim' or 'euler', got '{other}'"))),
    }
}

/// Solves the state equation. Returns a dict with `t`, `T` and the
/// interface jumps `q`.
#[pyfunction]
#[pyo3(signature = (spec, v, steps, scheme="iim", mode="continuous", jumps=None))]
fn simulate<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    v: Vec<f64>,
    steps: usize,
    scheme: &str,
    mode: &str,
    jumps: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mesh = core::build_mesh(&spec.0, steps).py_err()?;
    let state = state_for(&spec.0, &v, &mesh, scheme, interface_mode(mode, jumps)?)?;
    let out = PyDict::new(py);
    out.set_item("t", mesh.nodes().to_vec())?;
    out.set_item("T", state.values().to_vec())?;
    out.set_item("q", state.augmented().to_vec())?;
    Ok(out)
}

/// Solves state and adjoint with the interface-corrected schemes. Returns
/// `t`, `lambda`, `gradient` and `objective`.
#[pyfunction]
#[pyo3(signature = (spec, v, steps, mode="continuous"))]
fn adjoint<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    v: Vec<f64>,
    steps: usize,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = interface_mode(mode, None)?;
    let mesh = core::build_mesh(&spec.0, steps).py_err()?;
    let state = core::solve_state_iim(&spec.0, &v, &mesh, &mode).py_err()?;
    let adj = core::solve_adjoint_iim(&spec.0, &v, &mesh, &state, &mode).py_err()?;
    let grad = core::evaluate_gradient(&spec.0, &v, &adj).py_err()?;
    let out = PyDict::new(py);
    out.set_item("t", mesh.nodes().to_vec())?;
    out.set_item("lambda", adj.values().to_vec())?;
    out.set_item("gradient", grad.into_values())?;
    out.set_item("objective", core::evaluate_objective(&spec.0, &state).value())?;
    Ok(out)
}

fn evaluator(spec: &PyProblemSpec, steps: usize, scheme: &str) -> PyResult<core::OdeEvaluator> {
    let mesh = core::build_mesh(&spec.0, steps).py_err()?;
    let scheme = match scheme {
        "iim" => core::Scheme::Iim(core::InterfaceMode::Continuous),
        "augmented" => core::Scheme::Iim(core::InterfaceMode::Augmented),
        "euler" => core::Scheme::Euler,
        other => return Err(PyValueError::new_err(format!("unknown scheme '{other}'"))),
    };
    Ok(core::OdeEvaluator::new(spec.0.clone(), mesh, scheme))
}

/// Trapezoid tracking objective of the control `v`.
#[pyfunction]
#[pyo3(signature = (spec, v, steps, scheme="iim"))]
fn objective(spec: &PyProblemSpec, v: Vec<f64>, steps: usize, scheme: &str) -> PyResult<f64> {
    use core::Evaluator;
    evaluator(spec, steps, scheme)?.objective(&v).py_err()
}

/// Adjoint gradient `dJ/dv_i` of the discrete objective.
#[pyfunction]
#[pyo3(signature = (spec, v, steps, scheme="iim"))]
fn gradient(spec: &PyProblemSpec, v: Vec<f64>, steps: usize, scheme: &str) -> PyResult<Vec<f64>> {
    use core::Evaluator;
    let (_, g) = evaluator(spec, steps, scheme)?.objective_and_gradient(&v).py_err()?;
    Ok(g.into_values())
}

/// Forward-difference gradient with step `eps`.
#[pyfunction]
#[pyo3(signature = (spec, v, steps, eps=1e-6, scheme="iim"))]
fn fd_gradient(spec: &PyProblemSpec, v: Vec<f64>, steps: usize, eps: f64, scheme: &str) -> PyResult<Vec<f64>> {
    let eval = evaluator(spec, steps, scheme)?;
    core::finite_difference_gradient(&eval, &v, eps).map(|g| g.into_values()).py_err()
}

fn binary(v: &[u8]) -> PyResult<core::BinaryControl> {
    if v.iter().any(|&b| b > 1) {
        return Err(PyValueError::new_err("control entries must be 0 or 1"));
    }
    Ok(core::BinaryControl::new(v.iter().map(|&b| b == 1).collect()))
}

/// Exact minimizer of `g.(v_hat - v)` over binary controls within Hamming
/// distance `radius` of `v`.
#[pyfunction]
fn knapsack_step(g: Vec<f64>, v: Vec<u8>, radius: usize) -> PyResult<Vec<u32>> {
    if g.len() != v.len() {
        return Err(PyValueError::new_err("g and v must have the same length"));
    }
    let out = core::knapsack_step(&g, &binary(&v)?, radius);
    Ok(out.bits().iter().map(|&b| u32::from(b)).collect())
}

/// Trust-region optimization. `init` is `"rounded-relaxation"`, `"random"`
/// or `"given"` (with `v0`). Returns the result summary and the trace.
#[pyfunction]
#[pyo3(signature = (spec, steps, init="rounded-relaxation", seed=0, v0=None, initial_radius=None, acceptance_ratio=0.75, max_iterations=500, rounding_threshold=0.5, scheme="iim"))]
#[allow(clippy::too_many_arguments)]
fn optimize<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    steps: usize,
    init: &str,
    seed: u64,
    v0: Option<Vec<u8>>,
    initial_radius: Option<usize>,
    acceptance_ratio: f64,
    max_iterations: usize,
    rounding_threshold: f64,
    scheme: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let eval = evaluator(spec, steps, scheme)?;
    let cfg = core::OptimizerConfig {
        initial_radius,
        acceptance_ratio,
        max_iterations,
        rounding_threshold,
        ..Default::default()
    };
    let n = spec.0.interval_count();
    let start = match (init, v0) {
        ("rounded-relaxation", None) => {
            let relaxed = core::relaxation_solve(&eval, &cfg.relaxation).py_err()?;
            core::round_relaxation(&relaxed.control, rounding_threshold).py_err()?
        }
        ("random", None) => core::random_control(n, seed),
        ("given", Some(v)) => binary(&v)?,
        _ => return Err(PyValueError::new_err("init must be 'rounded-relaxation', 'random' or 'given' (with v0)")),
    };
    let res = core::trust_region_solve(&eval, &start, &cfg).py_err()?;

    let out = PyDict::new(py);
    out.set_item("control", res.control.bits().iter().map(|&b| u32::from(b)).collect::<Vec<_>>())?;
    out.set_item("objective_initial", res.objective_initial)?;
    out.set_item("objective_final", res.objective_final)?;
    out.set_item("percent_reduction", res.percent_reduction())?;
    out.set_item("iterations", res.iterations)?;
    out.set_item("termination_reason", res.termination.as_str())?;
    out.set_item("truncated", res.truncated)?;
    let trace: Vec<(usize, usize, f64, f64, bool, usize)> =
        res.trace.records.iter().map(|r| (r.k, r.delta, r.objective, r.rho, r.accepted, r.step_l1)).collect();
    out.set_item("trace", trace)?;
    Ok(out)
}

/// IIM and Euler convergence study for a binary control. `reference` is
/// `"paper-exact"` (closed form with jumps) or `"continuous"` (RK4).
/// Returns `levels`, `iim`/`euler` errors and their mean orders.
#[pyfunction]
#[pyo3(signature = (spec, v, levels, reference="paper-exact", fine=8))]
fn convergence<'py>(
    py: Python<'py>,
    spec: &PyProblemSpec,
    v: Vec<f64>,
    levels: Vec<usize>,
    reference: &str,
    fine: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let s = &spec.0;
    let (mode, exact) = match reference {
        "paper-exact" => (core::InterfaceMode::Prescribed(core::paper_exact_jumps(s, &v).py_err()?), true),
        "continuous" => (core::InterfaceMode::Continuous, false),
        other => return Err(PyValueError::new_err(format!("unknown reference '{other}'"))),
    };
    let reference_nodes = |mesh: &core::TimeMesh| -> core::Result<Vec<f64>> {
        if exact {
            core::paper_exact_nodes(s, &v, mesh)
        } else {
            Ok(core::reference_integrator(s, &v, mesh, fine)?.into_values())
        }
    };
    let iim = core::convergence_study(&levels, |n| {
        let mesh = core::build_mesh(s, n)?;
        let state = core::solve_state_iim(s, &v, &mesh, &mode)?;
        Ok(core::max_node_error(state.values(), &reference_nodes(&mesh)?))
    })
    .py_err()?;
    let euler = core::convergence_study(&levels, |n| {
        let mesh = core::build_mesh(s, n)?;
        let state = core::solve_state_euler(s, &v, &mesh)?;
        Ok(core::max_node_error(state.values(), &reference_nodes(&mesh)?))
    })
    .py_err()?;
    let out = PyDict::new(py);
    out.set_item("levels", levels)?;
    out.set_item("iim", iim.errors())?;
    out.set_item("euler", euler.errors())?;
    out.set_item("iim_mean_order", iim.mean_order())?;
    out.set_item("euler_mean_order", euler.mean_order())?;
    Ok(out)
}

#[pymodule]
fn bangbang(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblemSpec>()?;
    m.add_class::<PyScalarField>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(adjoint, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(fd_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(knapsack_step, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    Ok(())
}
