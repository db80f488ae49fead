//! Python bindings for `budsel`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use budsel::bandit::{bandit_select, obj_criterion as obj_criterion_rs};
use budsel::datagen::DataSource;
use budsel::fast::{fast_condition as fast_condition_rs, select_fast, FastWeights};
use budsel::grid::{
    build_coarse_grid_from_slice, grid_size as grid_size_rs, verify_grid_condition, CoarseGrid,
};
use budsel::harness::{Experiment as RsExperiment, ExperimentConfig};
use budsel::nested::{
    doubling_schedule as doubling_schedule_rs, score_nested as score_nested_rs, select_nested,
    SelectionOutcome,
};
use budsel::penalties::composite_penalty as composite_penalty_rs;
use budsel::ConcentrationConstants;

fn py_err(e: budsel::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "CoarseGrid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    #[pyo3(get)]
    indices: Vec<usize>,
    #[pyo3(get)]
    s: usize,
    #[pyo3(get)]
    lambda_: f64,
    #[pyo3(get)]
    k_lambda: usize,
    #[pyo3(get)]
    thresholds: Vec<f64>,
    #[pyo3(get)]
    penbars: Vec<f64>,
}

impl From<CoarseGrid> for PyGrid {
    fn from(g: CoarseGrid) -> Self {
        Self {
            indices: g.indices,
            s: g.s,
            lambda_: g.lambda,
            k_lambda: g.k_lambda,
            thresholds: g.thresholds,
            penbars: g.penbars,
        }
    }
}

impl PyGrid {
    fn inner(&self) -> CoarseGrid {
        CoarseGrid {
            indices: self.indices.clone(),
            s: self.s,
            lambda: self.lambda_,
            k_lambda: self.k_lambda,
            thresholds: self.thresholds.clone(),
            penbars: self.penbars.clone(),
        }
    }
}

#[pymethods]
impl PyGrid {
    /// Whether every class up to `k_lambda` has a grid representative.
    fn satisfies(&self, penbars: Vec<f64>) -> bool {
        verify_grid_condition(&self.inner(), &penbars, self.lambda_).satisfied
    }

    fn __repr__(&self) -> String {
        format!("CoarseGrid(indices={:?}, s={}, k_lambda={})", self.indices, self.s, self.k_lambda)
    }
}

#[pyclass(name = "Selection", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySelection {
    #[pyo3(get)]
    chosen_index: usize,
    #[pyo3(get)]
    weights: Vec<f64>,
    #[pyo3(get)]
    empirical_risk: f64,
    #[pyo3(get)]
    score: f64,
    /// `(index, n_samples, empirical_risk, penalty, score)` per grid class.
    #[pyo3(get)]
    per_class: Vec<(usize, u64, f64, f64, f64)>,
    #[pyo3(get)]
    budget_used: f64,
    #[pyo3(get)]
    grid: PyGrid,
}

impl From<SelectionOutcome> for PySelection {
    fn from(o: SelectionOutcome) -> Self {
        Self {
            chosen_index: o.chosen_index,
            weights: o.model.weights,
            empirical_risk: o.empirical_risk,
            score: o.score,
            per_class: o
                .per_class
                .iter()
                .map(|c| (c.index, c.n_samples, c.empirical_risk, c.penalty, c.score))
                .collect(),
            budget_used: o.budget_used,
            grid: o.grid.into(),
        }
    }
}

#[pymethods]
impl PySelection {
    fn __repr__(&self) -> String {
        format!("Selection(chosen_index={}, score={})", self.chosen_index, self.score)
    }
}

/// An experiment described by a TOML config string.
#[pyclass(name = "Experiment", frozen)]
struct PyExperiment {
    config: ExperimentConfig,
}

#[pymethods]
impl PyExperiment {
    #[new]
    #[pyo3(signature = (config_toml = ""))]
    fn new(config_toml: &str) -> PyResult<Self> {
        let config = ExperimentConfig::from_toml_str(config_toml).map_err(py_err)?;
        config.validate().map_err(py_err)?;
        Ok(Self { config })
    }

    fn config_toml(&self) -> String {
        self.config.to_toml_string()
    }

    /// Draws `n` samples from the generator's generic stream.
    fn generate(&self, n: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let samples = budsel::datagen::generate(&self.config.generator.spec(), n).map_err(py_err)?;
        Ok(samples.into_iter().map(|s| (s.x, s.y)).unzip())
    }

    #[pyo3(signature = (budget, trial = 0))]
    fn select_nested(&self, py: Python<'_>, budget: f64, trial: u64) -> PyResult<PySelection> {
        let cfg = &self.config;
        let classes = cfg.classes().map_err(py_err)?;
        py.detach(|| {
            select_nested(
                &classes,
                &cfg.learner(),
                &cfg.generator.spec(),
                budget,
                &cfg.nested_config(trial),
            )
        })
        .map(Into::into)
        .map_err(py_err)
    }

    #[pyo3(signature = (budget, trial = 0))]
    fn select_fast(&self, py: Python<'_>, budget: f64, trial: u64) -> PyResult<PySelection> {
        let cfg = &self.config;
        let classes = cfg.classes().map_err(py_err)?;
        py.detach(|| {
            select_fast(
                &classes,
                &cfg.learner(),
                &cfg.generator.spec(),
                budget,
                &cfg.fast_config(trial),
            )
        })
        .map(|o| o.outcome.into())
        .map_err(py_err)
    }

    /// Runs the bandit for `rounds` quanta; returns `(counts, most_frequent)`.
    #[pyo3(signature = (rounds, trial = 0))]
    fn select_bandit(&self, py: Python<'_>, rounds: u64, trial: u64) -> PyResult<(Vec<u64>, usize)> {
        let cfg = &self.config;
        let classes = cfg.classes().map_err(py_err)?;
        let spec = cfg.generator.spec();
        let source: &dyn DataSource = &spec;
        py.detach(|| bandit_select(&classes, &cfg.learner(), source, rounds, &cfg.bandit_config(trial)))
            .map(|o| (o.trace.counts, o.trace.most_frequent))
            .map_err(py_err)
    }

    /// Runs every configured cell; returns one JSON record per trial.
    fn run(&self, py: Python<'_>) -> PyResult<Vec<String>> {
        let config = self.config.clone();
        py.detach(|| RsExperiment::new(config).and_then(|e| e.run()))
            .map(|recs| recs.iter().map(|r| r.to_json_line()).collect())
            .map_err(py_err)
    }
}

#[pyfunction]
fn grid_size(bound: f64, n1: f64, lambda_: f64) -> PyResult<usize> {
    grid_size_rs(bound, n1, lambda_).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (penbars, lambda_ = 1.0, s = 1))]
fn coarse_grid(penbars: Vec<f64>, lambda_: f64, s: usize) -> PyResult<PyGrid> {
    build_coarse_grid_from_slice(&penbars, lambda_, s)
        .map(Into::into)
        .map_err(py_err)
}

#[pyfunction]
fn score_nested(emp_risk: f64, pen_value: f64, c2: f64, m: f64, s: usize, n: u64) -> PyResult<f64> {
    score_nested_rs(emp_risk, pen_value, c2, m, s, n).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (gamma, n, s, c2 = 1.0, m = 1.0))]
fn composite_penalty(gamma: f64, n: u64, s: usize, c2: f64, m: f64) -> PyResult<f64> {
    let consts = ConcentrationConstants {
        c2,
        m,
        ..Default::default()
    };
    composite_penalty_rs(gamma, n, s, &consts).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (emp_i, emp_j, pen_i, pen_j, c2, m, s, n_i, zeta1 = 8.5, zeta2 = 3.5))]
#[allow(clippy::too_many_arguments)]
fn fast_condition(
    emp_i: f64,
    emp_j: f64,
    pen_i: f64,
    pen_j: f64,
    c2: f64,
    m: f64,
    s: usize,
    n_i: u64,
    zeta1: f64,
    zeta2: f64,
) -> PyResult<bool> {
    fast_condition_rs(emp_i, emp_j, pen_i, pen_j, c2, m, s, n_i, &FastWeights { zeta1, zeta2 })
        .map_err(py_err)
}

#[pyfunction]
fn obj_criterion(emp_risk: f64, pen_at_n: f64, pen_at_tn: f64, k: usize, n: u64) -> PyResult<f64> {
    obj_criterion_rs(emp_risk, pen_at_n, pen_at_tn, k, n).map_err(py_err)
}

#[pyfunction]
fn doubling_schedule(t0: f64) -> PyResult<Vec<f64>> {
    doubling_schedule_rs(t0).map_err(py_err)
}

#[pymodule]
fn pybudsel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PySelection>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(grid_size, m)?)?;
    m.add_function(wrap_pyfunction!(coarse_grid, m)?)?;
    m.add_function(wrap_pyfunction!(score_nested, m)?)?;
    m.add_function(wrap_pyfunction!(composite_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(fast_condition, m)?)?;
    m.add_function(wrap_pyfunction!(obj_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(doubling_schedule, m)?)?;
    Ok(())
}
