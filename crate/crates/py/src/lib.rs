//! Python bindings for the celltune simulator.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use celltune::agents::tabular_update;
use celltune::env::Environment;
use celltune::harness::output::report_fields;
use celltune::harness::{train_and_evaluate, Algorithm, RunConfig, Scenario};

fn py_err(e: celltune::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn db_to_linear(db: f64) -> f64 {
    celltune::radio::db_to_linear(db)
}

#[pyfunction]
fn linear_to_db(linear: f64) -> f64 {
    celltune::radio::linear_to_db(linear)
}

/// Effective SINR in dB of per-UE samples given in dB.
#[pyfunction]
fn effective_sinr_db(samples_db: Vec<f64>) -> PyResult<f64> {
    let samples = samples_db
        .iter()
        .enumerate()
        .map(|(i, &g)| celltune::radio::SinrSample::from_db(i, 0, g))
        .collect::<celltune::Result<Vec<_>>>()
        .map_err(py_err)?;
    celltune::radio::effective_sinr_db(&samples).map_err(py_err)
}

#[pyfunction]
fn retainability(samples_db: Vec<f64>, gamma_min_db: f64) -> PyResult<f64> {
    celltune::metrics::retainability(&samples_db, gamma_min_db).map_err(py_err)
}

#[pyfunction]
fn waterfill(gains: Vec<f64>, power: f64, noise: f64) -> PyResult<Vec<f64>> {
    celltune::metrics::waterfill(&gains, power, noise).map_err(py_err)
}

#[pyfunction]
fn max_sinr_power(trace_db: Vec<f64>, p0_dbm: f64) -> PyResult<f64> {
    celltune::baselines::max_sinr_power(&trace_db, p0_dbm).map_err(py_err)
}

/// Trains (when the algorithm learns) and evaluates one configuration.
/// Returns the metrics as a dict.
#[pyfunction]
#[pyo3(signature = (scenario, algorithm="proposed", seed=0, train_episodes=None, eval_episodes=None, config=None))]
fn run<'py>(
    py: Python<'py>,
    scenario: &str,
    algorithm: &str,
    seed: u64,
    train_episodes: Option<u64>,
    eval_episodes: Option<u64>,
    config: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let scenario: Scenario = scenario.parse().map_err(py_err)?;
    let mut cfg = match config {
        Some(p) => RunConfig::load(&p, Some(scenario)).map_err(py_err)?,
        None => RunConfig::defaults(scenario),
    };
    cfg.run.algorithm = algorithm.parse::<Algorithm>().map_err(py_err)?;
    cfg.run.seed = seed;
    if let Some(n) = train_episodes {
        cfg.run.train_episodes = n;
    }
    if let Some(n) = eval_episodes {
        cfg.run.eval_episodes = n;
    }
    cfg.validate().map_err(py_err)?;
    let (_, eval) = py.detach(|| train_and_evaluate(&cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    for (k, v) in report_fields(&eval.report) {
        d.set_item(k, v)?;
    }
    d.set_item("target_attainment", eval.target_attainment)?;
    d.set_item("commands", eval.commands)?;
    Ok(d)
}

/// Indoor VoLTE power-control environment.
#[pyclass]
struct VolteEnv {
    inner: celltune::env::VolteEnv,
}

#[pymethods]
impl VolteEnv {
    #[new]
    fn new() -> PyResult<Self> {
        Ok(Self {
            inner: celltune::env::VolteEnv::with_defaults().map_err(py_err)?,
        })
    }

    fn reset(&mut self, seed: u64) -> PyResult<usize> {
        self.inner.reset(seed).map_err(py_err)
    }

    /// Returns `(state, reward, done, gamma_eff_db)`.
    fn step(&mut self, action: usize) -> PyResult<(usize, f64, bool, f64)> {
        let t = self.inner.step(action).map_err(py_err)?;
        Ok((self.inner.state(), t.reward, t.terminal, t.observable))
    }

    #[getter]
    fn state(&self) -> usize {
        self.inner.state()
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    #[getter]
    fn tti(&self) -> u32 {
        self.inner.tti()
    }

    #[getter]
    fn gamma_eff_db(&self) -> f64 {
        self.inner.gamma_eff_db()
    }

    #[getter]
    fn per_ue_sinr_db(&self) -> Vec<f64> {
        self.inner.per_ue_sinr_db()
    }

    #[getter]
    fn tx_power_dbm(&self) -> Vec<f64> {
        self.inner.tx_power_dbm().to_vec()
    }
}

/// Outdoor SON fault-management environment.
#[pyclass]
struct SonEnv {
    inner: celltune::env::SonEnv,
}

#[pymethods]
impl SonEnv {
    #[new]
    fn new() -> PyResult<Self> {
        Ok(Self {
            inner: celltune::env::SonEnv::with_defaults().map_err(py_err)?,
        })
    }

    fn reset(&mut self, seed: u64) -> PyResult<usize> {
        self.inner.reset(seed).map_err(py_err)
    }

    /// Returns `(state, reward, done, active_alarms)`.
    fn step(&mut self, action: usize) -> PyResult<(usize, f64, bool, f64)> {
        let t = self.inner.step(action).map_err(py_err)?;
        Ok((self.inner.state(), t.reward, t.terminal, t.observable))
    }

    /// Action that clears `fault_id`.
    #[staticmethod]
    fn clear_action(fault_id: u8) -> PyResult<usize> {
        celltune::env::son_fault_action(fault_id).map_err(py_err)
    }

    fn inject_fault(&mut self, fault_id: u8) -> PyResult<()> {
        self.inner.inject_fault(fault_id).map_err(py_err)
    }

    #[getter]
    fn state(&self) -> usize {
        self.inner.state()
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    #[getter]
    fn active_faults(&self) -> Vec<u8> {
        self.inner.faults().register().active_faults()
    }

    #[getter]
    fn gamma_eff_db(&self) -> f64 {
        self.inner.gamma_eff_db()
    }
}

#[pyclass]
struct QTable {
    inner: celltune::agents::QTable,
}

#[pymethods]
impl QTable {
    #[new]
    #[pyo3(signature = (n_states, n_actions, learning_rate=0.2, discount=0.995))]
    fn new(n_states: usize, n_actions: usize, learning_rate: f64, discount: f64) -> PyResult<Self> {
        Ok(Self {
            inner: celltune::agents::QTable::new(n_states, n_actions, learning_rate, discount).map_err(py_err)?,
        })
    }

    fn get(&self, s: usize, a: usize) -> PyResult<f64> {
        self.check(s, a)?;
        Ok(self.inner.get(s, a))
    }

    fn set(&mut self, s: usize, a: usize, v: f64) -> PyResult<()> {
        self.check(s, a)?;
        self.inner.set(s, a, v);
        Ok(())
    }

    fn row(&self, s: usize) -> PyResult<Vec<f64>> {
        self.check(s, 0)?;
        Ok(self.inner.row(s).to_vec())
    }

    /// One tabular Q-learning update; returns the new value.
    fn update(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> PyResult<f64> {
        tabular_update(&mut self.inner, s, a, r, s_next).map_err(py_err)
    }
}

impl QTable {
    fn check(&self, s: usize, a: usize) -> PyResult<()> {
        if s >= self.inner.n_states() || a >= self.inner.n_actions() {
            return Err(PyValueError::new_err(format!("({s}, {a}) is outside the table")));
        }
        Ok(())
    }
}

#[pymodule]
fn celltune_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(db_to_linear, m)?)?;
    m.add_function(wrap_pyfunction!(linear_to_db, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sinr_db, m)?)?;
    m.add_function(wrap_pyfunction!(retainability, m)?)?;
    m.add_function(wrap_pyfunction!(waterfill, m)?)?;
    m.add_function(wrap_pyfunction!(max_sinr_power, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_class::<VolteEnv>()?;
    m.add_class::<SonEnv>()?;
    m.add_class::<QTable>()?;
    Ok(())
}
