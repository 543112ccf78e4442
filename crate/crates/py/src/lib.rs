//! Python module `crowdtune`: configs, populations, simulations, Shapley
//! attribution and tournaments.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crowdtune_core as core;
use crowdtune_core::experiment::{
    self, PopulationSpec, ShapleyMethod, ShapleySettings, TournamentSettings,
};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: core::Error) -> PyErr {
    match err {
        core::Error::Io { .. } => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn json_err(err: serde_json::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn grouping(name: &str) -> PyResult<core::GroupingMethod> {
    core::GroupingMethod::ALL
        .into_iter()
        .find(|g| g.short_name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown grouping {name:?}; use random, egreedy or interleaved")))
}

fn eval_method(name: &str) -> PyResult<core::EvalMethod> {
    core::EvalMethod::ALL
        .into_iter()
        .find(|e| e.short_name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown eval {name:?}; use l2, l1 or dot")))
}

#[pyclass(name = "SimConfig", module = "crowdtune", from_py_object)]
#[derive(Clone)]
pub struct PySimConfig {
    inner: core::SimConfig,
}

#[pymethods]
impl PySimConfig {
    #[new]
    #[pyo3(signature = (
        n_users = 50, n_groups = 3, n_rounds = 100, delta = 0.1, grouping = "random", eval = "l2",
        error_rate = 0.05, seed = 0, epsilon_start = 1.0, epsilon_end = 0.1
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_users: usize,
        n_groups: usize,
        n_rounds: usize,
        delta: f64,
        grouping: &str,
        eval: &str,
        error_rate: f64,
        seed: u64,
        epsilon_start: f64,
        epsilon_end: f64,
    ) -> PyResult<Self> {
        let inner = core::SimConfig {
            n_users,
            n_groups,
            n_rounds,
            delta,
            grouping_method: self::grouping(grouping)?,
            eval_method: eval_method(eval)?,
            expert_error_rate: error_rate,
            seed,
            epsilon_start,
            epsilon_end,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users
    }
    #[getter]
    fn n_groups(&self) -> usize {
        self.inner.n_groups
    }
    #[getter]
    fn n_rounds(&self) -> usize {
        self.inner.n_rounds
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }
    #[getter]
    fn grouping(&self) -> &'static str {
        self.inner.grouping_method.short_name()
    }
    #[getter]
    fn eval(&self) -> &'static str {
        self.inner.eval_method.short_name()
    }
    #[getter]
    fn error_rate(&self) -> f64 {
        self.inner.expert_error_rate
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: core::SimConfig = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SimConfig(n_users={}, n_groups={}, n_rounds={}, delta={}, grouping='{}', eval='{}', error_rate={}, seed={})",
            c.n_users, c.n_groups, c.n_rounds, c.delta, c.grouping_method, c.eval_method, c.expert_error_rate, c.seed
        )
    }
}

#[pyclass(name = "Population", module = "crowdtune", from_py_object)]
#[derive(Clone)]
pub struct PyPopulation {
    inner: core::Population,
}

#[pymethods]
impl PyPopulation {
    #[staticmethod]
    fn synthetic(n_users: usize, dim: usize, seed: u64) -> PyResult<Self> {
        let mut rng = core::make_rng(seed, core::StreamId::Population);
        let inner = core::generate_synthetic(n_users, dim, &mut rng).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn movielens(ratings: PathBuf, items: PathBuf) -> PyResult<Self> {
        let inner = core::parse_movielens(&ratings, &items).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(json_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn user_ids(&self) -> Vec<usize> {
        self.inner.user_ids()
    }

    /// Preference vectors in user-id order.
    fn vectors(&self) -> Vec<Vec<f64>> {
        self.inner.users().iter().map(|u| u.prefs.components().to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "SimRecord", module = "crowdtune", skip_from_py_object)]
pub struct PySimRecord {
    inner: core::SimRecord,
}

#[pymethods]
impl PySimRecord {
    #[getter]
    fn initial_distance(&self) -> f64 {
        self.inner.initial_distance
    }
    #[getter]
    fn final_distance(&self) -> f64 {
        self.inner.final_distance
    }
    #[getter]
    fn config(&self) -> PySimConfig {
        PySimConfig {
            inner: self.inner.config.clone(),
        }
    }
    /// Distance to the expert after each round.
    #[getter]
    fn distances(&self) -> Vec<f64> {
        self.inner.rounds.iter().map(|r| r.distance_after).collect()
    }
    #[getter]
    fn expert_erred(&self) -> Vec<bool> {
        self.inner.rounds.iter().map(|r| r.expert_erred).collect()
    }
    #[getter]
    fn expert(&self) -> Vec<f64> {
        self.inner.expert.components().to_vec()
    }
    /// Final points per user id.
    #[getter]
    fn ledger(&self) -> BTreeMap<usize, f64> {
        self.inner.final_ledger.scores.clone()
    }
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }
    fn __len__(&self) -> usize {
        self.inner.rounds.len()
    }
}

#[pyclass(name = "ShapleyEstimate", module = "crowdtune", skip_from_py_object)]
pub struct PyShapleyEstimate {
    inner: core::ShapleyEstimate,
    pearson: Option<f64>,
}

#[pymethods]
impl PyShapleyEstimate {
    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.inner.phi.clone()
    }
    #[getter]
    fn estimator(&self) -> String {
        format!("{:?}", self.inner.estimator).to_lowercase()
    }
    #[getter]
    fn n_evaluations(&self) -> usize {
        self.inner.n_evaluations
    }
    #[getter]
    fn v_full(&self) -> f64 {
        self.inner.v_full
    }
    #[getter]
    fn v_empty(&self) -> f64 {
        self.inner.v_empty
    }
    /// Correlation between final points and phi, None when undefined.
    #[getter]
    fn pearson(&self) -> Option<f64> {
        self.pearson
    }
    fn efficiency_gap(&self) -> f64 {
        self.inner.efficiency_gap()
    }
}

fn population_spec(population: Option<&PyPopulation>, dim: usize) -> PopulationSpec {
    match population {
        Some(p) => PopulationSpec::Sampled(p.inner.clone()),
        None => PopulationSpec::Synthetic { dim },
    }
}

/// Runs one simulation. Without a population, users are drawn uniformly
/// in `dim` dimensions from the config's seed.
#[pyfunction]
#[pyo3(signature = (config, population = None, dim = 19))]
fn simulate(py: Python<'_>, config: PySimConfig, population: Option<PyPopulation>, dim: usize) -> PyResult<PySimRecord> {
    let spec = population_spec(population.as_ref(), dim);
    let trial = py
        .detach(|| experiment::run_trial(&config.inner, &spec, None))
        .map_err(to_py)?;
    Ok(PySimRecord { inner: trial.record })
}

/// Simulates, then estimates each user's Shapley value.
/// `estimator` is one of auto, exact, kernel, perm.
#[pyfunction]
#[pyo3(signature = (config, population = None, dim = 19, estimator = "auto", budget = 2048, value_metric = "l2"))]
fn shapley(
    py: Python<'_>,
    config: PySimConfig,
    population: Option<PyPopulation>,
    dim: usize,
    estimator: &str,
    budget: usize,
    value_metric: &str,
) -> PyResult<(PySimRecord, PyShapleyEstimate)> {
    let method = match estimator {
        "auto" => ShapleyMethod::Auto,
        "exact" => ShapleyMethod::Exact,
        "kernel" => ShapleyMethod::Kernel,
        "perm" => ShapleyMethod::Permutation,
        other => return Err(PyValueError::new_err(format!("unknown estimator {other:?}"))),
    };
    let metric = match value_metric {
        "l2" => core::ValueMetric::L2Distance,
        "evaluation" => core::ValueMetric::Evaluation,
        other => return Err(PyValueError::new_err(format!("unknown value metric {other:?}"))),
    };
    let settings = ShapleySettings { method, budget, metric };
    let spec = population_spec(population.as_ref(), dim);
    let trial = py
        .detach(|| experiment::run_trial(&config.inner, &spec, Some(&settings)))
        .map_err(to_py)?;
    let estimate = trial.shapley.expect("shapley settings were given");
    Ok((
        PySimRecord { inner: trial.record },
        PyShapleyEstimate {
            inner: estimate,
            pearson: trial.pearson,
        },
    ))
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    core::pearson(&x, &y).map_err(to_py)
}

/// Runs one seeded tournament and the single-model baseline. Returns a dict
/// with initial and final distances, per-iteration winner distances and
/// baseline (count, distance) pairs.
#[pyfunction]
#[pyo3(signature = (seed = 0, k = 100, clones = 3, iterations = 3, eta = 0.3, spread = 0.2, dim = 28, baseline_counts = vec![33, 66, 100]))]
#[allow(clippy::too_many_arguments)]
fn tournament<'py>(
    py: Python<'py>,
    seed: u64,
    k: usize,
    clones: usize,
    iterations: usize,
    eta: f64,
    spread: f64,
    dim: usize,
    baseline_counts: Vec<usize>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let settings = TournamentSettings {
        k,
        clones,
        iterations,
        eta,
        spread,
        dim,
        seed,
        baseline_counts,
    };
    let trial = experiment::run_tournament_trial(&settings).map_err(to_py)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("initial_distance", trial.record.initial_distance)?;
    out.set_item("final_distance", trial.record.final_distance)?;
    let winners: Vec<f64> = trial
        .record
        .iterations
        .iter()
        .map(|it| it.clone_distances[it.winner])
        .collect();
    out.set_item("winner_distances", winners)?;
    out.set_item("baseline", trial.baseline)?;
    Ok(out)
}

#[pymodule]
fn crowdtune(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyPopulation>()?;
    m.add_class::<PySimRecord>()?;
    m.add_class::<PyShapleyEstimate>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(shapley, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(tournament, m)?)?;
    m.add("MAX_EXACT_PLAYERS", core::shapley::MAX_EXACT_PLAYERS)?;
    Ok(())
}
