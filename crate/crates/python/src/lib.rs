//! Python bindings: task model, the three tests, partitioning, generation,
//! falsification and experiment sweeps.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mcpart::experiments::{self, ExperimentConfig, ExperimentRecord};
use mcpart::simulator::{self, FalsifyOutcome};
use mcpart::{amc, ecdf, edfvd};
use mcpart::{
    Criticality, DeadlineModel, GeneratorConfig, Outcome, Partitioner, Strategy, Task, TaskSet, TestKind, Utilizations,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn value_error(e: mcpart::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = mcpart::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(value_error)
}

#[pyclass(name = "Task", frozen, skip_from_py_object, module = "mcpart_py")]
#[derive(Clone)]
struct PyTask {
    inner: Task,
}

#[pymethods]
impl PyTask {
    /// `Task(id, period, criticality, wcet_lo, wcet_hi=None, deadline=None)`;
    /// `wcet_hi` defaults to `wcet_lo` and `deadline` to `period`.
    #[new]
    #[pyo3(signature = (id, period, criticality, wcet_lo, wcet_hi=None, deadline=None))]
    fn new(
        id: usize,
        period: u64,
        criticality: &str,
        wcet_lo: u64,
        wcet_hi: Option<u64>,
        deadline: Option<u64>,
    ) -> PyResult<Self> {
        let chi = match criticality.to_ascii_uppercase().as_str() {
            "HC" | "HI" => Criticality::Hi,
            "LC" | "LO" => Criticality::Lo,
            other => return Err(PyValueError::new_err(format!("unknown criticality `{other}`"))),
        };
        let inner = Task::new(
            id,
            period,
            chi,
            wcet_lo,
            wcet_hi.unwrap_or(wcet_lo),
            deadline.unwrap_or(period),
        )
        .map_err(value_error)?;
        Ok(PyTask { inner })
    }

    #[getter]
    fn id(&self) -> usize {
        self.inner.id()
    }

    #[getter]
    fn period(&self) -> u64 {
        self.inner.period()
    }

    #[getter]
    fn criticality(&self) -> &'static str {
        if self.inner.is_hi() {
            "HC"
        } else {
            "LC"
        }
    }

    #[getter]
    fn wcet_lo(&self) -> u64 {
        self.inner.wcet_lo()
    }

    #[getter]
    fn wcet_hi(&self) -> u64 {
        self.inner.wcet_hi()
    }

    #[getter]
    fn deadline(&self) -> u64 {
        self.inner.deadline()
    }

    #[getter]
    fn u_lo(&self) -> f64 {
        self.inner.u_lo()
    }

    #[getter]
    fn u_hi(&self) -> f64 {
        self.inner.u_hi()
    }

    fn __repr__(&self) -> String {
        let t = &self.inner;
        format!(
            "Task(id={}, period={}, criticality='{}', wcet_lo={}, wcet_hi={}, deadline={})",
            t.id(),
            t.period(),
            self.criticality(),
            t.wcet_lo(),
            t.wcet_hi(),
            t.deadline()
        )
    }
}

fn unwrap_tasks(tasks: &[PyRef<'_, PyTask>]) -> Vec<Task> {
    tasks.iter().map(|t| t.inner).collect()
}

#[pyclass(name = "TaskSet", frozen, module = "mcpart_py")]
struct PyTaskSet {
    inner: TaskSet,
}

#[pymethods]
impl PyTaskSet {
    #[new]
    #[pyo3(signature = (m, tasks, deadline_model="implicit"))]
    fn new(m: usize, tasks: Vec<PyRef<'_, PyTask>>, deadline_model: &str) -> PyResult<Self> {
        let model: DeadlineModel = parse(deadline_model)?;
        let inner = TaskSet::new(m, model, unwrap_tasks(&tasks)).map_err(value_error)?;
        Ok(PyTaskSet { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyTaskSet {
            inner: TaskSet::from_json(text).map_err(value_error)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(value_error)
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn deadline_model(&self) -> &'static str {
        self.inner.deadline_model().as_str()
    }

    #[getter]
    fn tasks(&self) -> Vec<PyTask> {
        self.inner.tasks().iter().map(|&inner| PyTask { inner }).collect()
    }

    /// Normalized `(U_LL, U_HL, U_HH)`.
    fn utilizations(&self) -> (f64, f64, f64) {
        let u = self.inner.system_utilizations();
        (u.lc_lo, u.hc_lo, u.hc_hi)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TaskSet(m={}, n={}, deadline_model='{}')",
            self.inner.m(),
            self.inner.len(),
            self.inner.deadline_model()
        )
    }
}

/// EDF-VD verdict and scaling factor (`None` when rejected).
#[pyfunction]
fn edfvd_test(tasks: Vec<PyRef<'_, PyTask>>) -> PyResult<(bool, Option<f64>)> {
    let v = edfvd::edfvd_schedulable(&unwrap_tasks(&tasks)).map_err(value_error)?;
    Ok((v.schedulable, v.scaling))
}

/// AMC response-time analysis under deadline-monotonic priorities.
/// `variant` is "rtb" or "max".
#[pyfunction]
#[pyo3(signature = (tasks, variant="max"))]
fn amc_test<'py>(py: Python<'py>, tasks: Vec<PyRef<'py, PyTask>>, variant: &str) -> PyResult<Bound<'py, PyDict>> {
    let tasks = unwrap_tasks(&tasks);
    let order = amc::assign_priorities(&tasks);
    let r = match variant {
        "rtb" => amc::amc_rtb(&tasks, &order),
        "max" => amc::amc_max(&tasks, &order),
        other => return Err(PyValueError::new_err(format!("unknown AMC variant `{other}`"))),
    };
    let d = PyDict::new(py);
    d.set_item("schedulable", r.schedulable)?;
    d.set_item("priority_order", order.positions().to_vec())?;
    d.set_item("r_lo", r.r_lo)?;
    d.set_item("r_hi", r.r_hi)?;
    d.set_item("failing_task", r.failing_task)?;
    Ok(d)
}

/// Demand-bound test verdict and the tuned virtual deadlines.
#[pyfunction]
fn ecdf_test(tasks: Vec<PyRef<'_, PyTask>>) -> (bool, Vec<u64>) {
    let v = ecdf::ecdf_schedulable(&unwrap_tasks(&tasks));
    (v.schedulable, v.assignment.deadlines().to_vec())
}

/// Partitions `taskset` onto `m` processors (default: the set's own `m`).
#[pyfunction]
#[pyo3(signature = (taskset, strategy, test, m=None))]
fn partition<'py>(
    py: Python<'py>,
    taskset: PyRef<'py, PyTaskSet>,
    strategy: &str,
    test: &str,
    m: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let strategy: Strategy = parse(strategy)?;
    let test: TestKind = parse(test)?;
    let m = m.unwrap_or(taskset.inner.m());
    let p = Partitioner::new(strategy, test).run(&taskset.inner, m).map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("success", p.is_success())?;
    d.set_item("bins", p.bins.iter().map(|b| b.task_ids()).collect::<Vec<_>>())?;
    let failed = match p.outcome {
        Outcome::Success => None,
        Outcome::Failure { task, .. } => Some(task),
    };
    d.set_item("failed_task", failed)?;
    Ok(d)
}

/// Draws one random task set with normalized targets.
#[pyfunction]
#[pyo3(signature = (m, u_hh, u_hl, u_ll, p_h=0.5, deadline_model="implicit", seed=0))]
fn generate(m: usize, u_hh: f64, u_hl: f64, u_ll: f64, p_h: f64, deadline_model: &str, seed: u64) -> PyResult<PyTaskSet> {
    let cfg = GeneratorConfig::new(m, p_h, Utilizations::new(u_ll, u_hl, u_hh), parse(deadline_model)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = mcpart::generate_taskset(&cfg, &mut rng).map_err(value_error)?;
    Ok(PyTaskSet { inner })
}

/// Simulates the runtime configured by `test`. Returns `None` when no miss
/// was found (or the test rejects), otherwise a dict describing the miss.
#[pyfunction]
#[pyo3(signature = (test, tasks, scenarios=50, seed=0))]
fn falsify<'py>(
    py: Python<'py>,
    test: &str,
    tasks: Vec<PyRef<'py, PyTask>>,
    scenarios: usize,
    seed: u64,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let test: TestKind = parse(test)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match simulator::falsify(test, &unwrap_tasks(&tasks), scenarios, &mut rng) {
        FalsifyOutcome::Counterexample(c) => {
            let d = PyDict::new(py);
            d.set_item("scenario_index", c.scenario_index)?;
            if let Some(miss) = c.report.miss {
                d.set_item("task", miss.task)?;
                d.set_item("deadline", miss.deadline)?;
            }
            d.set_item("switch_time", c.report.switch_time)?;
            Ok(Some(d))
        }
        _ => Ok(None),
    }
}

/// `sum(AR * U_B) / sum(U_B)`.
#[pyfunction]
fn weighted_acceptance_ratio(u_b: Vec<f64>, acceptance: Vec<f64>) -> PyResult<f64> {
    if u_b.len() != acceptance.len() {
        return Err(PyValueError::new_err("u_b and acceptance differ in length"));
    }
    let records: Vec<ExperimentRecord> = u_b
        .iter()
        .zip(&acceptance)
        .map(|(&u_b, &ar)| ExperimentRecord {
            strategy: Strategy::CuUdp,
            test: TestKind::EdfVd,
            m: 1,
            deadline_model: DeadlineModel::Implicit,
            p_h: 0.0,
            u_b,
            n_total: 0,
            n_accepted: 0,
            acceptance_ratio: ar,
        })
        .collect();
    experiments::weighted_acceptance_ratio(&records).map_err(value_error)
}

/// Runs a sweep from a JSON config and returns the results table as dicts.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_json: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(value_error)?;
    let results = experiments::run_experiment(&cfg).map_err(value_error)?;
    results
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("strategy", r.strategy.as_str())?;
            d.set_item("test", r.test.as_str())?;
            d.set_item("m", r.m)?;
            d.set_item("deadline_model", r.deadline_model.as_str())?;
            d.set_item("p_h", r.p_h)?;
            d.set_item("u_b", r.u_b)?;
            d.set_item("n_total", r.n_total)?;
            d.set_item("n_accepted", r.n_accepted)?;
            d.set_item("acceptance_ratio", r.acceptance_ratio)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn mcpart_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTask>()?;
    m.add_class::<PyTaskSet>()?;
    m.add_function(wrap_pyfunction!(edfvd_test, m)?)?;
    m.add_function(wrap_pyfunction!(amc_test, m)?)?;
    m.add_function(wrap_pyfunction!(ecdf_test, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(falsify, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_acceptance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("STRATEGIES", Strategy::ALL.iter().map(|s| s.as_str()).collect::<Vec<_>>())?;
    m.add("TESTS", TestKind::ALL.iter().map(|t| t.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
