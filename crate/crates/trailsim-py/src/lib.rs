//! Python bindings: load a scenario, run seeded simulations in-process, and
//! read back counts, accuracy and energy without any file round-trips.
//!
//! Build with `cargo build --release -p trailsim-py`, then import the
//! produced cdylib as `trailsim_py` (see python/smoke_test.py).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trailsim::engine;
use trailsim::protocol::Mode;
use trailsim::scenario::{AttributeSetSpec, ScenarioConfig};
use trailsim::sensing::NoiseModel;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A loaded scenario configuration. Mutating methods adjust the same knobs
/// the CLI exposes.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    config: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    /// Load a scenario from a TOML file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let config = ScenarioConfig::load(Path::new(path)).map_err(value_err)?;
        Ok(Scenario { config })
    }

    /// Parse a scenario from TOML text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let config = ScenarioConfig::from_toml(text, "<string>").map_err(value_err)?;
        Ok(Scenario { config })
    }

    #[getter]
    fn name(&self) -> String {
        self.config.name.clone()
    }

    #[getter]
    fn sensor_count(&self) -> usize {
        self.config.graph.sensor_count()
    }

    #[getter]
    fn population_size(&self) -> usize {
        self.config.population.size
    }

    #[getter]
    fn mode(&self) -> String {
        self.config.mode.name().to_string()
    }

    /// "always-on" or "duty-cycle".
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.config.mode = Mode::parse(mode)
            .ok_or_else(|| value_err(format!("unknown mode {mode:?}")))?;
        Ok(())
    }

    /// Named attribute set or comma-separated attribute list, as in the CLI
    /// --attributes flag.
    fn set_attribute_set(&mut self, spec: &str) -> PyResult<()> {
        AttributeSetSpec::parse(spec).map_err(value_err)?.apply(&mut self.config);
        Ok(())
    }

    /// Override perception noise; clears any per-attribute flip overrides.
    fn set_noise(&mut self, p_err: f64, sigma: f64) -> PyResult<()> {
        let noise = NoiseModel { p_err, sigma, p_err_overrides: BTreeMap::new() };
        noise.validate().map_err(value_err)?;
        self.config.noise = noise;
        Ok(())
    }

    /// Force distinct ground-truth attribute tuples (zero-noise recovery
    /// experiments).
    fn set_distinct_attributes(&mut self, distinct: bool) {
        self.config.population.distinct_attributes = distinct;
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, sensors={}, population={}, mode={:?})",
            self.config.name,
            self.config.graph.sensor_count(),
            self.config.population.size,
            self.config.mode.name(),
        )
    }
}

/// Outcome of one seeded run.
#[pyclass]
struct SimulationResult {
    #[pyo3(get)]
    seed: u64,
    #[pyo3(get)]
    unique_count: usize,
    #[pyo3(get)]
    true_count: usize,
    #[pyo3(get)]
    count_accuracy: f64,
    #[pyo3(get)]
    falsely_new: u64,
    #[pyo3(get)]
    wrongly_merged: u64,
    #[pyo3(get)]
    trail_exact_fraction: f64,
    #[pyo3(get)]
    observation_count: usize,
    energy: BTreeMap<u32, u64>,
    trails: Vec<Vec<(u32, i64)>>,
}

#[pymethods]
impl SimulationResult {
    /// Energy units per sensor id.
    fn energy_units(&self) -> HashMap<u32, u64> {
        self.energy.iter().map(|(k, v)| (*k, *v)).collect()
    }

    /// Reconstructed trails: one list of (sensor_id, tick) per unique user.
    fn trails(&self) -> Vec<Vec<(u32, i64)>> {
        self.trails.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "SimulationResult(seed={}, unique_count={}, true_count={}, accuracy={:.3})",
            self.seed, self.unique_count, self.true_count, self.count_accuracy
        )
    }
}

fn convert(result: engine::RunResult) -> SimulationResult {
    let acc = result.accuracy.as_ref();
    SimulationResult {
        seed: result.seed,
        unique_count: result.registry.unique_count(),
        true_count: result.agents.len(),
        count_accuracy: acc.map_or(0.0, |a| a.count_accuracy),
        falsely_new: acc.map_or(0, |a| a.falsely_new),
        wrongly_merged: acc.map_or(0, |a| a.wrongly_merged),
        trail_exact_fraction: acc.map_or(0.0, |a| a.trail_exact_fraction),
        observation_count: result.observations.len(),
        energy: result.energy.units.iter().map(|(k, v)| (k.0, *v)).collect(),
        trails: result
            .registry
            .trails()
            .map(|(_, t)| t.iter().map(|(s, tick)| (s.0, *tick)).collect())
            .collect(),
    }
}

/// Execute one seeded run.
#[pyfunction]
fn run(scenario: &Scenario, seed: u64) -> PyResult<SimulationResult> {
    engine::run(&scenario.config, seed).map(convert).map_err(runtime_err)
}

/// Run seeds base_seed..base_seed+n and aggregate count accuracy and energy.
#[pyfunction]
#[pyo3(signature = (scenario, n, base_seed=0, jobs=1))]
fn replicate(scenario: &Scenario, n: usize, base_seed: u64, jobs: usize) -> PyResult<Py<PyAny>> {
    let stats = engine::replicate(&scenario.config, n, base_seed, jobs);
    if let Some((seed, e)) = stats.failures.first() {
        return Err(runtime_err(format!("seed {seed}: {e}")));
    }
    Python::attach(|py| {
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("runs", stats.summaries.len())?;
        dict.set_item("mean_count_accuracy", stats.mean_count_accuracy)?;
        dict.set_item("std_count_accuracy", stats.std_count_accuracy)?;
        dict.set_item("mean_trail_exact", stats.mean_trail_exact)?;
        let energy: HashMap<u32, f64> =
            stats.mean_energy.iter().map(|(k, v)| (k.0, *v)).collect();
        dict.set_item("mean_energy_units", energy)?;
        Ok(dict.into())
    })
}

/// Paired duty-cycle vs always-on energy comparison.
#[pyfunction]
#[pyo3(signature = (scenario, n, base_seed=0, jobs=1))]
fn compare_energy(scenario: &Scenario, n: usize, base_seed: u64, jobs: usize) -> PyResult<Py<PyAny>> {
    let cmp = engine::compare_energy(&scenario.config, n, base_seed, jobs);
    Python::attach(|py| {
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("mean_units_duty", cmp.mean_units_duty)?;
        dict.set_item("mean_units_on", cmp.mean_units_on)?;
        dict.set_item("saving_percent", cmp.saving_percent)?;
        dict.set_item("saving_std", cmp.saving_std)?;
        let per_sensor: HashMap<u32, (f64, f64, Option<f64>)> = cmp
            .per_sensor
            .iter()
            .map(|r| (r.sensor.0, (r.mean_units_duty, r.mean_units_on, r.saving_percent)))
            .collect();
        dict.set_item("per_sensor", per_sensor)?;
        Ok(dict.into())
    })
}

/// Shannon entropy in bits of a multiset of categorical values.
#[pyfunction]
fn attribute_entropy(values: Vec<String>) -> PyResult<f64> {
    trailsim::protocol::attribute_entropy(&values).map_err(value_err)
}

#[pymodule]
fn trailsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Scenario>()?;
    m.add_class::<SimulationResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(replicate, m)?)?;
    m.add_function(wrap_pyfunction!(compare_energy, m)?)?;
    m.add_function(wrap_pyfunction!(attribute_entropy, m)?)?;
    Ok(())
}
