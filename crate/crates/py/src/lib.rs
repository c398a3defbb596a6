//! Python module `caloric`: run configurations through the pipeline and get JSON reports back.

use std::path::PathBuf;

use caloric::runner::{execute, run_pipeline, RunConfig, Stages};
use caloric::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(caloric, ConfigError, PyValueError, "Invalid or unparsable run configuration.");
create_exception!(caloric, NumericalError, PyArithmeticError, "A solver or diagnostic failed numerically.");
create_exception!(caloric, PipelineError, PyRuntimeError, "Any other pipeline failure, such as I/O.");

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    if e.is_numerical() {
        return NumericalError::new_err(msg);
    }
    match e.root() {
        Error::Parse(_) | Error::Validation { .. } => ConfigError::new_err(msg),
        _ => PipelineError::new_err(msg),
    }
}

fn parse_stages(stages: &str) -> PyResult<Stages> {
    match stages {
        "simulate" => Ok(Stages::SIMULATE),
        "gauge" => Ok(Stages::GAUGE),
        "all" | "diagnose" => Ok(Stages::ALL),
        other => Err(PyValueError::new_err(format!(
            "unknown stages {other:?}; expected simulate, gauge or all"
        ))),
    }
}

/// Canonical TOML with every default spelled out.
#[pyfunction]
fn default_config() -> PyResult<String> {
    RunConfig::default().to_toml().map_err(to_py)
}

/// Parses and validates a TOML configuration and returns its canonical form.
#[pyfunction]
fn check_config(text: &str) -> PyResult<String> {
    RunConfig::from_toml(text).and_then(|c| c.to_toml()).map_err(to_py)
}

/// Runs the pipeline on a TOML configuration and returns the report as JSON.
///
/// With `out` set, snapshots and CSVs are written there as well.
#[pyfunction]
#[pyo3(signature = (config, stages = "all", out = None, threads = None))]
fn run(py: Python<'_>, config: &str, stages: &str, out: Option<PathBuf>, threads: Option<usize>) -> PyResult<String> {
    let cfg = RunConfig::from_toml(config).map_err(to_py)?;
    let stages = parse_stages(stages)?;
    let pool = match threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| PipelineError::new_err(e.to_string()))?,
        ),
        None => None,
    };
    let report = py.detach(|| {
        let go = || match &out {
            Some(dir) => run_pipeline(&cfg, stages, dir),
            None => execute(&cfg, stages).map(|o| o.report),
        };
        match &pool {
            Some(pool) => pool.install(go),
            None => go(),
        }
    });
    let report = report.map_err(to_py)?;
    serde_json::to_string(&report).map_err(|e| PipelineError::new_err(e.to_string()))
}

/// Times and discrete energies of the wave evolution alone.
#[pyfunction]
fn energy_series(py: Python<'_>, config: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cfg = RunConfig::from_toml(config).map_err(to_py)?;
    let out = py.detach(|| execute(&cfg, Stages::SIMULATE)).map_err(to_py)?;
    Ok((out.report.energy.times, out.report.energy.energies))
}

/// Minkowski inner product with signature (-, +, ..., +).
#[pyfunction]
fn mink_inner(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(PyValueError::new_err(format!("lengths {} and {} differ or are zero", u.len(), v.len())));
    }
    Ok(caloric::mink_inner(&u, &v))
}

#[pymodule(name = "caloric")]
pub fn caloric_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("PipelineError", py.get_type::<PipelineError>())?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(energy_series, m)?)?;
    m.add_function(wrap_pyfunction!(mink_inner, m)?)?;
    Ok(())
}
