//! Python module `serp_audit`: designs, simulated runs, rotation and analysis.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use serp_audit_core::analytics::{analyze as analyze_records, AnalysisOptions};
use serp_audit_core::collector::manifest::read_manifest;
use serp_audit_core::config::{DesignFile, FaultsFile};
use serp_audit_core::design::{validate_design, ExperimentDesign};
use serp_audit_core::fleet;
use serp_audit_core::rotation::rotation_schedule;
use serp_audit_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

/// An experiment design.
#[pyclass(name = "Design", module = "serp_audit")]
struct PyDesign {
    inner: ExperimentDesign,
}

#[pymethods]
impl PyDesign {
    /// Parses a design file's TOML text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = DesignFile::parse(text).and_then(DesignFile::into_design).map_err(py_err)?;
        Ok(PyDesign { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = serp_audit_core::config::load_design(&path).map_err(py_err)?;
        Ok(PyDesign { inner })
    }

    fn to_toml(&self) -> String {
        DesignFile::from_design(&self.inner).to_toml()
    }

    /// Invariant violations; empty when the design is runnable.
    fn validate(&self) -> Vec<String> {
        validate_design(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    fn planned_routines(&self) -> BTreeMap<String, u64> {
        fleet::planned_routines(&self.inner)
    }

    #[getter]
    fn collection_id(&self) -> String {
        self.inner.collection_id.clone()
    }

    #[setter]
    fn set_collection_id(&mut self, id: String) {
        self.inner.collection_id = id;
    }

    #[getter]
    fn engines(&self) -> Vec<String> {
        self.inner.engines.iter().map(|e| e.engine_id.clone()).collect()
    }

    #[getter]
    fn queries(&self) -> Vec<String> {
        self.inner.queries.clone()
    }

    #[setter]
    fn set_queries(&mut self, queries: Vec<String>) {
        self.inner.queries = queries;
    }

    #[getter]
    fn agents(&self) -> u32 {
        self.inner.agents
    }

    #[getter]
    fn start_epoch(&self) -> String {
        self.inner.start_epoch.to_rfc3339()
    }

    #[getter]
    fn end_epoch(&self) -> String {
        self.inner.end_epoch.to_rfc3339()
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(collection_id={:?}, engines={}, queries={}, agents={})",
            self.inner.collection_id,
            self.inner.engines.len(),
            self.inner.queries.len(),
            self.inner.agents
        )
    }
}

/// `(engine, query)` index pairs visited by an agent, in order.
#[pyfunction]
#[pyo3(signature = (engines, queries, iterations = 1, start_offset = 0))]
fn rotation(engines: usize, queries: usize, iterations: usize, start_offset: usize) -> PyResult<Vec<(usize, usize)>> {
    let schedule = rotation_schedule(engines, queries, iterations, start_offset).map_err(py_err)?;
    Ok(schedule.iter().map(|p| (p.engine, p.query)).collect())
}

/// Runs the design in virtual time and writes the collection under `out`.
/// `faults` is the text of a faults file. Returns a run summary.
#[pyfunction]
#[pyo3(signature = (design, out, seed = 0, faults = None))]
fn run_simulated<'py>(
    py: Python<'py>,
    design: PyRef<'py, PyDesign>,
    out: PathBuf,
    seed: u64,
    faults: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let faults = match faults {
        Some(text) => FaultsFile::parse(text).map_err(py_err)?,
        None => FaultsFile::default(),
    };
    let design = design.inner.clone();
    let outcome = py
        .detach(|| fleet::run_simulated(&design, &faults, seed, &out))
        .map_err(py_err)?;
    let aborted: Vec<String> = outcome
        .logs
        .iter()
        .filter_map(|l| l.aborted().map(|r| format!("{}: {r}", l.agent_id)))
        .collect();
    let summary = serde_json::json!({
        "collection_dir": outcome.collection_dir.display().to_string(),
        "records": outcome.status.records,
        "bytes": outcome.status.bytes,
        "shed": outcome.status.shed,
        "routines": outcome.logs.iter().map(|l| l.routines.len()).sum::<usize>(),
        "readiness_resets": outcome.logs.iter().map(|l| l.readiness_resets()).sum::<usize>(),
        "aborted": aborted,
    });
    json_to_py(py, &summary)
}

/// Page records of a manifest file as dictionaries.
#[pyfunction]
fn load_records<'py>(py: Python<'py>, manifest: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let records = read_manifest(&manifest).map_err(py_err)?;
    let value = serde_json::to_value(&records).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

/// Full analysis report of a manifest as a dictionary.
#[pyfunction]
#[pyo3(signature = (manifest, design, holdout_manifest = None, holdout_design = None, seed = 0, resamples = 10000))]
fn analyze<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    design: PyRef<'py, PyDesign>,
    holdout_manifest: Option<PathBuf>,
    holdout_design: Option<PyRef<'py, PyDesign>>,
    seed: u64,
    resamples: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let records = read_manifest(&manifest).map_err(py_err)?;
    let held = match (holdout_manifest, &holdout_design) {
        (Some(path), Some(d)) => Some((read_manifest(&path).map_err(py_err)?, d.inner.clone())),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("holdout_manifest and holdout_design go together")),
    };
    let design = design.inner.clone();
    let report = py
        .detach(|| {
            analyze_records(
                &records,
                &design,
                held.as_ref().map(|(r, d)| (r.as_slice(), d)),
                AnalysisOptions { resamples, seed },
            )
        })
        .map_err(py_err)?;
    py.import("json")?.call_method1("loads", (report.to_json(),))
}

#[pymodule]
fn serp_audit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(rotation, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulated, m)?)?;
    m.add_function(wrap_pyfunction!(load_records, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
