//! Python module `pvflex_py`. Every call takes and returns plain Python
//! values; structured results arrive as dicts decoded from the JSON the
//! core crate writes.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyTimeoutError, PyValueError};
use pyo3::prelude::*;

use pvflex::dispatch::{solve, DispatchProblem, SolverOptions};
use pvflex::forecast::{make_forecast, ForecastConfig};
use pvflex::grid::{default_feeder, feeder_calibration_report};
use pvflex::scenario::{hosting_capacity, run_scenario, HostingMethod, ScenarioConfig};
use pvflex::{Error, ErrorClass};

fn to_py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Config => PyValueError::new_err(msg),
        ErrorClass::Io => PyOSError::new_err(msg),
        ErrorClass::SolverLimit => PyTimeoutError::new_err(msg),
        ErrorClass::Other => PyRuntimeError::new_err(msg),
    }
}

/// Scenario from an optional TOML document, with the seed overridden.
pub fn scenario_config(toml: Option<&str>, seed: Option<u64>) -> pvflex::Result<ScenarioConfig> {
    let mut cfg = match toml {
        Some(text) => ScenarioConfig::from_toml_str(text)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn hosting_json(method: &str, cfg: &ScenarioConfig) -> pvflex::Result<String> {
    let method: HostingMethod = method.parse()?;
    let r = hosting_capacity(&cfg.scenario()?, method, &cfg.hosting)?;
    Ok(serde_json::to_string(&r)?)
}

pub fn run_det_json(cfg: &ScenarioConfig, penetration: Option<f64>) -> pvflex::Result<String> {
    let mut settings = cfg.run_settings();
    if let Some(p) = penetration {
        settings.penetration = p;
    }
    let (result, _) = run_scenario(&cfg.scenario()?, &settings)?;
    Ok(serde_json::to_string(&result)?)
}

pub fn solve_json(problem: &str, solver: Option<&str>) -> pvflex::Result<String> {
    let p = DispatchProblem::from_json(problem)?;
    let opts = match solver {
        Some(kind) => SolverOptions::with_kind(kind.parse()?),
        None => SolverOptions::default(),
    };
    solve(&p, &opts)?.to_json()
}

fn loads(py: Python<'_>, text: String) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// The calibrated default feeder as a TOML document.
#[pyfunction]
fn default_feeder_toml() -> String {
    default_feeder().to_toml_string()
}

/// Impedance scale, reference rise and peak-load voltage of the default feeder.
#[pyfunction]
fn feeder_calibration(py: Python<'_>) -> PyResult<Py<PyAny>> {
    let report = feeder_calibration_report().map_err(to_py_err)?;
    loads(py, serde_json::to_string(&report).map_err(|e| to_py_err(e.into()))?)
}

/// Hosting capacity by `method` ("dachcz", "correlation" or "dr").
#[pyfunction]
#[pyo3(signature = (method, scenario_toml=None, seed=None))]
fn hosting(py: Python<'_>, method: &str, scenario_toml: Option<&str>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let cfg = scenario_config(scenario_toml, seed).map_err(to_py_err)?;
    let text = py.detach(|| hosting_json(method, &cfg)).map_err(to_py_err)?;
    loads(py, text)
}

/// Deterministic dispatch over the scenario days; returns the summary.
#[pyfunction]
#[pyo3(signature = (scenario_toml=None, seed=None, penetration=None))]
fn run_det(
    py: Python<'_>,
    scenario_toml: Option<&str>,
    seed: Option<u64>,
    penetration: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let cfg = scenario_config(scenario_toml, seed).map_err(to_py_err)?;
    let text = py.detach(|| run_det_json(&cfg, penetration)).map_err(to_py_err)?;
    loads(py, text)
}

/// Solves a dispatch problem given as JSON and returns the solution as JSON.
#[pyfunction]
#[pyo3(signature = (problem_json, solver=None))]
fn solve_dispatch(py: Python<'_>, problem_json: &str, solver: Option<&str>) -> PyResult<String> {
    py.detach(|| solve_json(problem_json, solver)).map_err(to_py_err)
}

/// Ten-minute PV forecast of a day of minute values, issued at `issue_hour`.
#[pyfunction]
#[pyo3(signature = (actual_minutes, issue_hour, day, seed=0))]
fn forecast(actual_minutes: Vec<f64>, issue_hour: usize, day: u64, seed: u64) -> PyResult<Vec<f64>> {
    let config = ForecastConfig {
        seed,
        ..Default::default()
    };
    let trace = make_forecast(&actual_minutes, issue_hour, day, &config).map_err(to_py_err)?;
    Ok(trace.values)
}

#[pymodule]
fn pvflex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(default_feeder_toml, m)?)?;
    m.add_function(wrap_pyfunction!(feeder_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(hosting, m)?)?;
    m.add_function(wrap_pyfunction!(run_det, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dispatch, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    Ok(())
}
