//! Python module `taskalloc`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use taskalloc_cli::ScenarioFile;
use taskalloc_core as core;
use taskalloc_core::{AllocationKind, CandidateLocation, Horizon, NumericConfig, SimulationConfig};

create_exception!(taskalloc, InfeasibleLoadError, PyValueError);

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::InfeasibleLoad { .. } | core::Error::Domain { .. } => {
            InfeasibleLoadError::new_err(e.to_string())
        }
        core::Error::BelowFloor { .. }
        | core::Error::Saturation { .. }
        | core::Error::InversionFailure(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<AllocationKind> {
    match kind {
        "optimal" | "opt" => Ok(AllocationKind::Optimal),
        "nep" => Ok(AllocationKind::Nep),
        other => Err(PyValueError::new_err(format!(
            "kind must be 'optimal' or 'nep', got {other:?}"
        ))),
    }
}

/// One server: fixed two-way delay `delay` (seconds) plus a queue with
/// service rate `mu` (jobs/second).
#[pyclass(frozen, name = "Server", from_py_object)]
#[derive(Clone)]
pub struct PyServer {
    inner: core::ServerSpec,
}

#[pymethods]
impl PyServer {
    #[staticmethod]
    fn mm1(delay: f64, mu: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::ServerSpec::mm1(delay, mu).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn mg1(delay: f64, mu: f64, cv: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::ServerSpec::mg1(delay, mu, cv).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn md1(delay: f64, mu: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::ServerSpec::md1(delay, mu).map_err(to_py)?,
        })
    }

    #[getter]
    fn delay(&self) -> f64 {
        self.inner.delay()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter]
    fn cv(&self) -> f64 {
        self.inner.cv()
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.model().to_string()
    }

    fn latency(&self, x: f64) -> PyResult<f64> {
        self.inner.latency(x).map_err(to_py)
    }

    fn marginal_cost(&self, x: f64) -> PyResult<f64> {
        self.inner.marginal_cost(x).map_err(to_py)
    }

    fn invert_latency(&self, target: f64) -> PyResult<f64> {
        self.inner
            .invert_latency(target, &NumericConfig::default())
            .map_err(to_py)
    }

    fn invert_marginal(&self, target: f64) -> PyResult<f64> {
        self.inner
            .invert_marginal(target, &NumericConfig::default())
            .map_err(to_py)
    }

    fn zero_load_latency(&self) -> f64 {
        self.inner.zero_load_latency()
    }

    fn __repr__(&self) -> String {
        format!(
            "Server(model={}, delay={}, mu={}, cv={})",
            self.inner.model(),
            self.inner.delay(),
            self.inner.mu(),
            self.inner.cv()
        )
    }
}

#[pyclass(frozen, name = "Scenario", from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: core::Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (servers, resolution = None, eps_sat = None))]
    fn new(
        servers: Vec<PyServer>,
        resolution: Option<f64>,
        eps_sat: Option<f64>,
    ) -> PyResult<Self> {
        let mut cfg = NumericConfig::default();
        if let Some(r) = resolution {
            cfg.resolution = r;
        }
        if let Some(e) = eps_sat {
            cfg.eps_sat = e;
        }
        let servers = servers.into_iter().map(|s| s.inner).collect();
        Ok(Self {
            inner: core::Scenario::new(servers, cfg).map_err(to_py)?,
        })
    }

    /// Reads a TOML scenario file.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let file = ScenarioFile::read(&path).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = file
            .to_scenario()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        ScenarioFile::from_scenario(&self.inner)
            .map(|f| f.emit())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn servers(&self) -> Vec<PyServer> {
        self.inner
            .servers()
            .iter()
            .map(|s| PyServer { inner: s.clone() })
            .collect()
    }

    #[getter]
    fn capacity(&self) -> f64 {
        self.inner.capacity()
    }

    #[getter]
    fn max_load(&self) -> f64 {
        self.inner.max_load()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(frozen, get_all, name = "Allocation", skip_from_py_object)]
pub struct PyAllocation {
    kind: String,
    load: f64,
    p: Vec<f64>,
    multiplier: f64,
    active_count: usize,
    mean_latency: f64,
    order: Vec<usize>,
}

impl From<core::AllocationResult> for PyAllocation {
    fn from(r: core::AllocationResult) -> Self {
        Self {
            kind: r.kind.to_string(),
            load: r.load,
            p: r.p,
            multiplier: r.multiplier,
            active_count: r.active_count,
            mean_latency: r.mean_latency,
            order: r.order,
        }
    }
}

#[pymethods]
impl PyAllocation {
    fn __repr__(&self) -> String {
        format!(
            "Allocation(kind={}, load={}, p={:?}, multiplier={}, mean_latency={})",
            self.kind, self.load, self.p, self.multiplier, self.mean_latency
        )
    }
}

#[pyclass(frozen, get_all, name = "PoaPoint", skip_from_py_object)]
pub struct PyPoaPoint {
    load: f64,
    rho: f64,
    eta: f64,
    alpha: f64,
    u_opt: f64,
    gamma: f64,
    j_opt: usize,
    j_nep: usize,
}

impl From<core::PoaPoint> for PyPoaPoint {
    fn from(p: core::PoaPoint) -> Self {
        Self {
            load: p.load,
            rho: p.rho,
            eta: p.eta,
            alpha: p.alpha,
            u_opt: p.u_opt,
            gamma: p.gamma,
            j_opt: p.j_opt,
            j_nep: p.j_nep,
        }
    }
}

#[pymethods]
impl PyPoaPoint {
    fn __repr__(&self) -> String {
        format!(
            "PoaPoint(load={}, rho={}, eta={})",
            self.load, self.rho, self.eta
        )
    }
}

/// Allocation at `load` jobs/second; `kind` is "optimal" or "nep".
#[pyfunction]
#[pyo3(signature = (scenario, load, kind = "optimal"))]
fn solve(scenario: &PyScenario, load: f64, kind: &str) -> PyResult<PyAllocation> {
    let kind = parse_kind(kind)?;
    Ok(core::solve(&scenario.inner, load, kind)
        .map_err(to_py)?
        .into())
}

/// Activation thresholds as `(order, loads)`.
#[pyfunction]
#[pyo3(signature = (scenario, kind = "optimal"))]
fn thresholds(scenario: &PyScenario, kind: &str) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let t = core::activation_thresholds(&scenario.inner, parse_kind(kind)?);
    Ok((t.order, t.loads))
}

#[pyfunction]
fn poa(scenario: &PyScenario, load: f64) -> PyResult<PyPoaPoint> {
    Ok(core::poa_at(&scenario.inner, load).map_err(to_py)?.into())
}

/// Price of anarchy over `loads`, or over the default grid when omitted.
#[pyfunction]
#[pyo3(signature = (scenario, loads = None))]
fn poa_sweep(
    py: Python<'_>,
    scenario: &PyScenario,
    loads: Option<Vec<f64>>,
) -> PyResult<Vec<PyPoaPoint>> {
    let loads = loads.unwrap_or_else(|| core::default_grid(&scenario.inner));
    let curve = py
        .detach(|| core::poa_sweep(&scenario.inner, &loads))
        .map_err(to_py)?;
    Ok(curve.points.into_iter().map(PyPoaPoint::from).collect())
}

type Candidate = (String, Option<f64>, f64);

/// Worst-case price of anarchy as `(eta_max, candidates)`, each candidate a
/// `(location, load, eta)` tuple with `load` None for the full-load limit.
#[pyfunction]
fn worst_case(scenario: &PyScenario) -> PyResult<(f64, Vec<Candidate>)> {
    let wc = core::worst_case_poa(&scenario.inner).map_err(to_py)?;
    let candidates = wc
        .candidates
        .iter()
        .map(|c| {
            let location = match c.location {
                CandidateLocation::NepActivation { rank, server } => {
                    format!("nep_activation(rank={rank}, server={server})")
                }
                CandidateLocation::FullLoad => "full_load".to_string(),
            };
            (location, c.load, c.eta)
        })
        .collect();
    Ok((wc.max.eta, candidates))
}

#[pyfunction]
fn asymptotic_poa(scenario: &PyScenario) -> PyResult<f64> {
    core::asymptotic_poa(&scenario.inner).map_err(to_py)
}

fn sim_config(
    load: f64,
    p: Vec<f64>,
    jobs: u64,
    replications: usize,
    seed: u64,
    warmup: f64,
) -> SimulationConfig {
    let mut cfg = SimulationConfig::new(load, p);
    cfg.horizon = Horizon::Jobs(jobs);
    cfg.replications = replications;
    cfg.seed = seed;
    cfg.warmup = warmup;
    cfg
}

/// Simulates routing `p` at `load`. Returns the aggregate mean latency, its
/// confidence half-width (None with one replication) and per-server mean
/// latencies.
#[pyfunction]
#[pyo3(signature = (scenario, load, p, jobs = 200_000, replications = 5, seed = 1, warmup = 0.2))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    scenario: &PyScenario,
    load: f64,
    p: Vec<f64>,
    jobs: u64,
    replications: usize,
    seed: u64,
    warmup: f64,
) -> PyResult<(f64, Option<f64>, Vec<f64>)> {
    let cfg = sim_config(load, p, jobs, replications, seed, warmup);
    let report = py
        .detach(|| core::simulate(&scenario.inner, &cfg))
        .map_err(to_py)?;
    Ok((
        report.aggregate.mean_latency,
        report.aggregate.latency_half_width,
        report.servers.iter().map(|s| s.mean_latency).collect(),
    ))
}

/// Solves, simulates and compares. Returns `(analytic, empirical,
/// relative_gap, passed)`.
#[pyfunction]
#[pyo3(signature = (scenario, load, kind = "optimal", tolerance = 0.03, jobs = 200_000, replications = 5, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn validate(
    py: Python<'_>,
    scenario: &PyScenario,
    load: f64,
    kind: &str,
    tolerance: f64,
    jobs: u64,
    replications: usize,
    seed: u64,
) -> PyResult<(f64, f64, f64, bool)> {
    let kind = parse_kind(kind)?;
    let cfg = sim_config(load, Vec::new(), jobs, replications, seed, 0.2);
    let v = py
        .detach(|| core::validate(&scenario.inner, load, kind, &cfg, tolerance))
        .map_err(to_py)?;
    Ok((v.analytic, v.empirical, v.relative_gap, v.passed))
}

#[pymodule]
fn taskalloc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyServer>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyAllocation>()?;
    m.add_class::<PyPoaPoint>()?;
    m.add(
        "InfeasibleLoadError",
        m.py().get_type::<InfeasibleLoadError>(),
    )?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(poa, m)?)?;
    m.add_function(wrap_pyfunction!(poa_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_poa, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
