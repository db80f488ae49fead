//! Trial orchestration: run a selector, score its output against the
//! reference risks, and emit one record per (budget, trial) cell.

use rayon::prelude::*;

use crate::bandit::{bandit_select, excess_gaps, regret};
use crate::datagen::{oracle_class_risks_unchecked, population_risk_mc, ClassRisk, DataGenSpec};
use crate::error::{Error, Result};
use crate::fast::select_fast;
use crate::harness::bounds::{compute_bound_rhs, BoundKind};
use crate::harness::config::{ExperimentConfig, SelectorKind};
use crate::harness::records::{ClassRecord, TrialRecord};
use crate::learners::SgdLearner;
use crate::nested::{doubling_select, select_nested, SelectionOutcome};
use crate::types::{ConcentrationConstants, LinearModel, ModelClassSpec};

/// A validated experiment together with its per-class reference risks.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub classes: Vec<ModelClassSpec>,
    pub generator: DataGenSpec,
    pub consts: ConcentrationConstants,
    pub learner: SgdLearner,
    pub references: Vec<ClassRisk>,
}

impl Experiment {
    /// Validates `config` and computes the reference risk of every class.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let generator = config.generator.spec();
        let classes = config.classes()?;
        let references = oracle_class_risks_unchecked(
            &generator,
            &classes,
            config.selector.loss,
            config.budget.oracle_samples,
            config.budget.oracle_mc,
        )?;
        Self::with_references(config, references)
    }

    /// Uses externally supplied reference risks instead of computing them.
    pub fn with_references(config: ExperimentConfig, references: Vec<ClassRisk>) -> Result<Self> {
        config.validate()?;
        let classes = config.classes()?;
        if references.len() != classes.len() {
            return Err(Error::MissingReference(references.len().min(classes.len()) + 1));
        }
        Ok(Self {
            generator: config.generator.spec(),
            consts: config.consts(),
            learner: config.learner(),
            classes,
            references,
            config,
        })
    }

    fn reference_risks(&self) -> Vec<f64> {
        self.references.iter().map(|r| r.risk).collect()
    }

    fn best_reference(&self) -> f64 {
        self.references.iter().map(|r| r.risk).fold(f64::INFINITY, f64::min)
    }

    fn selector_name(&self) -> &'static str {
        match self.config.selector.kind {
            SelectorKind::Nested if self.config.selector.doubling => "nested_doubling",
            k => k.name(),
        }
    }

    fn evaluate(&self, model: &LinearModel, chosen: usize, trial: u64) -> Result<(f64, f64)> {
        let est = population_risk_mc(
            model,
            &self.generator,
            self.config.selector.loss,
            self.config.budget.mc_samples,
            trial,
        )?;
        Ok((est.value + self.classes[chosen - 1].loss_offset, est.std_error))
    }

    /// Runs one (budget, trial) cell.
    pub fn run_trial(&self, budget: f64, trial: u64) -> Result<TrialRecord> {
        match self.config.selector.kind {
            SelectorKind::Nested | SelectorKind::Fast => self.run_grid_trial(budget, trial),
            SelectorKind::Bandit => self.run_bandit_trial(budget, trial),
        }
    }

    fn run_grid_trial(&self, budget: f64, trial: u64) -> Result<TrialRecord> {
        let sel = &self.config.selector;
        let (outcome, last_round, kind): (SelectionOutcome, Option<f64>, BoundKind) = match sel.kind {
            SelectorKind::Nested if sel.doubling => {
                let d = doubling_select(
                    &self.classes,
                    &self.learner,
                    &self.generator,
                    budget,
                    &self.config.nested_config(trial),
                )?;
                (d.outcome, Some(d.last_round_budget), BoundKind::SlowRate)
            }
            SelectorKind::Nested => (
                select_nested(
                    &self.classes,
                    &self.learner,
                    &self.generator,
                    budget,
                    &self.config.nested_config(trial),
                )?,
                None,
                BoundKind::SlowRate,
            ),
            _ => (
                select_fast(
                    &self.classes,
                    &self.learner,
                    &self.generator,
                    budget,
                    &self.config.fast_config(trial),
                )?
                .outcome,
                None,
                BoundKind::FastRate,
            ),
        };
        let bound_budget = last_round.unwrap_or(budget);
        let bound_rhs = compute_bound_rhs(
            kind,
            &self.classes,
            &self.reference_risks(),
            bound_budget,
            outcome.grid.s,
            &self.consts,
        )?;
        let (risk, risk_std_error) = self.evaluate(&outcome.model, outcome.chosen_index, trial)?;
        let budget_used = match last_round {
            Some(_) => crate::nested::doubling_schedule(budget)?.iter().sum(),
            None => outcome.budget_used,
        };
        Ok(TrialRecord {
            selector: self.selector_name().to_string(),
            budget,
            trial,
            seed: self.generator.seed,
            chosen_index: outcome.chosen_index,
            risk,
            risk_std_error,
            bound_rhs,
            violated: risk > bound_rhs,
            excess_risk: risk - self.best_reference(),
            empirical_risk: Some(outcome.empirical_risk),
            score: Some(outcome.score),
            grid_size: Some(outcome.grid.s),
            grid: outcome.grid.indices.clone(),
            classes: outcome
                .per_class
                .iter()
                .map(|c| ClassRecord {
                    index: c.index,
                    n_samples: c.n_samples,
                    empirical_risk: Some(c.empirical_risk),
                    penalty: Some(c.penalty),
                    score: Some(c.score),
                    gap: None,
                })
                .collect(),
            budget_used,
            last_round_budget: last_round,
            counts: None,
            regret: None,
        })
    }

    fn run_bandit_trial(&self, budget: f64, trial: u64) -> Result<TrialRecord> {
        let rounds = budget as u64;
        let out = bandit_select(
            &self.classes,
            &self.learner,
            &self.generator,
            rounds,
            &self.config.bandit_config(trial),
        )?;
        let gaps = excess_gaps(&self.classes, &self.reference_risks(), rounds)?;
        let chosen = out.trace.most_frequent;
        let (risk, risk_std_error) = self.evaluate(&out.model, chosen, trial)?;
        let penalized_best = self.references[gaps.optimal_index - 1].risk
            + self.classes[gaps.optimal_index - 1]
                .penalty
                .eval(rounds as f64 * out.trace.quantum_samples[gaps.optimal_index - 1] as f64)?;
        let classes = self
            .classes
            .iter()
            .enumerate()
            .map(|(p, c)| ClassRecord {
                index: c.index,
                n_samples: out.trace.samples[p],
                empirical_risk: None,
                penalty: c.penalty.eval(out.trace.samples[p] as f64).ok(),
                score: None,
                gap: Some(gaps.gaps[p]),
            })
            .collect();
        Ok(TrialRecord {
            selector: self.selector_name().to_string(),
            budget,
            trial,
            seed: self.generator.seed,
            chosen_index: chosen,
            risk,
            risk_std_error,
            bound_rhs: penalized_best,
            violated: chosen != gaps.optimal_index,
            excess_risk: risk - self.best_reference(),
            empirical_risk: None,
            score: None,
            grid_size: None,
            grid: Vec::new(),
            classes,
            budget_used: rounds as f64,
            last_round_budget: None,
            counts: Some(out.trace.counts.clone()),
            regret: Some(regret(&out.trace, &gaps)?),
        })
    }

    /// Every (budget, trial) cell in budget-major order. Cells run in
    /// parallel; the result does not depend on the worker count.
    pub fn run(&self) -> Result<Vec<TrialRecord>> {
        let cells: Vec<(f64, u64)> = self
            .config
            .budgets()
            .into_iter()
            .flat_map(|t| (0..self.config.budget.trials).map(move |k| (t, k)))
            .collect();
        cells
            .par_iter()
            .map(|&(t, k)| self.run_trial(t, k))
            .collect()
    }

    /// Re-derives the record in `line` and compares the serialized forms.
    pub fn replay(&self, line: &str) -> Result<ReplayOutcome> {
        let original = TrialRecord::from_json_line(line)?;
        let again = self.run_trial(original.budget, original.trial)?;
        let actual = again.to_json_line();
        Ok(ReplayOutcome {
            matches: actual == line.trim_end(),
            expected: line.trim_end().to_string(),
            actual,
        })
    }

    /// Violation frequency tolerated by `bench --check`.
    pub fn check_threshold(&self) -> f64 {
        if let Some(r) = self.config.budget.max_violation_rate {
            return r;
        }
        match self.config.selector.kind {
            SelectorKind::Bandit => 0.05,
            _ => (2.0 * self.consts.c1 * (-self.consts.m).exp() + 0.01).min(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub matches: bool,
    pub expected: String,
    pub actual: String,
}

/// Validates `config`, computes references and runs every cell.
pub fn run_experiment(config: ExperimentConfig) -> Result<Vec<TrialRecord>> {
    Experiment::new(config)?.run()
}
