//! Budget-split selection over the coarse grid of a nested hierarchy, and
//! the doubling wrapper for an unknown budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{DataSource, Phase, StreamId};
use crate::error::{Error, Result};
use crate::grid::{argmin_smallest, build_coarse_grid, grid_size, CoarseGrid, DEFAULT_MAX_PROBE};
use crate::learners::{Learner, SgdState};
use crate::penalties::{self, grid_samples};
use crate::risk::mean_loss;
use crate::types::{
    samples_for_budget, validate_nested, BudgetSchedule, ConcentrationConstants, LinearModel,
    ModelClassSpec, Sample,
};

/// Scores within this distance of the minimum count as ties.
pub const SCORE_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NestedConfig {
    pub consts: ConcentrationConstants,
    pub lambda: f64,
    pub max_probe: usize,
    /// Trial number keying every sample stream the run consumes.
    pub trial: u64,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            consts: ConcentrationConstants::default(),
            lambda: 1.0,
            max_probe: DEFAULT_MAX_PROBE,
            trial: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDiagnostics {
    pub index: usize,
    pub n_samples: u64,
    pub empirical_risk: f64,
    /// `gamma_i(n_i(T / s))`.
    pub penalty: f64,
    /// Composite penalty used to build the grid.
    pub penbar: f64,
    pub score: f64,
    /// Stream the class was trained on.
    pub stream: StreamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub chosen_index: usize,
    pub model: LinearModel,
    pub empirical_risk: f64,
    pub score: f64,
    pub per_class: Vec<ClassDiagnostics>,
    /// Compute actually spent: `sum_j n_j / rate_j` over grid classes.
    pub budget_used: f64,
    pub grid: CoarseGrid,
}

/// `emp + pen + (c2/2) sqrt(m/n) + (c2/2) sqrt(log s / n)`.
pub fn score_nested(emp_risk: f64, pen_value: f64, c2: f64, m: f64, s: usize, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if s == 0 {
        return Err(Error::InvalidArgument("grid size must be at least 1".into()));
    }
    let n = n as f64;
    Ok(emp_risk + pen_value + 0.5 * c2 * (m / n).sqrt() + 0.5 * c2 * ((s as f64).ln() / n).sqrt())
}

/// Which composite penalty shapes the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Composite {
    Slow,
    Fast { a: f64, b: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct GridPlan {
    pub schedule: BudgetSchedule,
    pub s: usize,
    pub grid: CoarseGrid,
}

pub(crate) fn plan_grid(
    hierarchy: &[ModelClassSpec],
    total_budget: f64,
    consts: &ConcentrationConstants,
    lambda: f64,
    max_probe: usize,
    composite: Composite,
) -> Result<GridPlan> {
    validate_nested(hierarchy)?;
    consts.validate()?;
    let schedule = BudgetSchedule::from_classes(hierarchy, total_budget)?;
    let n1 = samples_for_budget(&schedule, 1, total_budget)?;
    if n1 == 0 {
        return Err(Error::BudgetTooSmall {
            class: 1,
            budget: total_budget,
        });
    }
    let s = grid_size(consts.bound, n1 as f64, lambda)?;
    let grid = build_coarse_grid(
        |i| {
            let Some(class) = hierarchy.get(i - 1) else {
                return Ok(None);
            };
            let v = match composite {
                Composite::Slow => {
                    penalties::penbar(&class.penalty, &schedule, i, total_budget, s, consts)
                }
                Composite::Fast { a, b } => penalties::penbar_fast(
                    &class.penalty,
                    &schedule,
                    i,
                    total_budget,
                    s,
                    consts,
                    a,
                    b,
                ),
            };
            match v {
                Ok(v) => Ok(Some(v)),
                // classes that cannot be trained at T/s never enter the grid
                Err(Error::ZeroSamples { .. } | Error::PenaltyUndefined { .. }) if i > 1 => {
                    Ok(Some(f64::INFINITY))
                }
                Err(Error::ZeroSamples { budget, .. } | Error::PenaltyUndefined { n: budget, .. }) => {
                    Err(Error::BudgetTooSmall { class: 1, budget })
                }
                Err(e) => Err(e),
            }
        },
        max_probe,
        lambda,
        s,
    )?;
    Ok(GridPlan { schedule, s, grid })
}

/// The coarse grid the nested selector would train at `total_budget`.
pub fn nested_grid(
    hierarchy: &[ModelClassSpec],
    total_budget: f64,
    config: &NestedConfig,
) -> Result<CoarseGrid> {
    Ok(plan_grid(
        hierarchy,
        total_budget,
        &config.consts,
        config.lambda,
        config.max_probe,
        Composite::Slow,
    )?
    .grid)
}

/// One grid class after training on its own draw.
#[derive(Debug, Clone)]
pub(crate) struct TrainedClass {
    pub index: usize,
    pub n_samples: u64,
    pub stream: StreamId,
    pub state: SgdState,
    pub empirical_risk: f64,
    pub gamma: f64,
    pub samples: Option<Vec<Sample>>,
}

pub(crate) fn train_grid(
    hierarchy: &[ModelClassSpec],
    learner: &dyn Learner,
    source: &dyn DataSource,
    plan: &GridPlan,
    total_budget: f64,
    trial: u64,
    keep_samples: bool,
) -> Result<Vec<TrainedClass>> {
    let dim = source.dim();
    plan.grid
        .indices
        .par_iter()
        .map(|&j| {
            let class = &hierarchy[j - 1];
            let n = grid_samples(&plan.schedule, j, total_budget, plan.s).map_err(|e| match e {
                Error::ZeroSamples { class, budget } => Error::BudgetTooSmall { class, budget },
                other => other,
            })?;
            let stream = StreamId::new(Phase::Train, j, trial);
            let samples = source.draw(stream, n as usize)?;
            let state = learner.fit(class, dim, &samples, None)?;
            let empirical_risk = mean_loss(&state.model, &samples, learner.loss())? + class.loss_offset;
            let gamma = class.penalty.eval(n as f64)?;
            Ok(TrainedClass {
                index: j,
                n_samples: n,
                stream,
                state,
                empirical_risk,
                gamma,
                samples: keep_samples.then_some(samples),
            })
        })
        .collect()
}

pub(crate) fn budget_spent(plan: &GridPlan, trained: &[TrainedClass]) -> Result<f64> {
    trained.iter().try_fold(0.0, |acc, t| {
        Ok(acc + t.n_samples as f64 * plan.schedule.cost_per_sample(t.index)?)
    })
}

/// Splits `total_budget` evenly over the coarse grid, trains each grid class
/// on an independent draw, and returns the class with the smallest
/// penalized score (ties to the smallest index).
pub fn select_nested(
    hierarchy: &[ModelClassSpec],
    learner: &dyn Learner,
    source: &dyn DataSource,
    total_budget: f64,
    config: &NestedConfig,
) -> Result<SelectionOutcome> {
    let consts = &config.consts;
    let plan = plan_grid(
        hierarchy,
        total_budget,
        consts,
        config.lambda,
        config.max_probe,
        Composite::Slow,
    )?;
    let trained = train_grid(hierarchy, learner, source, &plan, total_budget, config.trial, false)?;

    let per_class: Vec<ClassDiagnostics> = trained
        .iter()
        .zip(&plan.grid.penbars)
        .map(|(t, &pb)| {
            Ok(ClassDiagnostics {
                index: t.index,
                n_samples: t.n_samples,
                empirical_risk: t.empirical_risk,
                penalty: t.gamma,
                penbar: pb,
                score: score_nested(t.empirical_risk, t.gamma, consts.c2, consts.m, plan.s, t.n_samples)?,
                stream: t.stream,
            })
        })
        .collect::<Result<_>>()?;

    let scores: Vec<f64> = per_class.iter().map(|d| d.score).collect();
    let best = argmin_smallest(&scores, SCORE_TIE_TOL).ok_or(Error::NoSamples)?;
    let budget_used = budget_spent(&plan, &trained)?;
    let chosen = &trained[best];
    Ok(SelectionOutcome {
        chosen_index: chosen.index,
        model: chosen.state.model.clone(),
        empirical_risk: chosen.empirical_risk,
        score: scores[best],
        per_class,
        budget_used,
        grid: plan.grid,
    })
}

/// Budgets `1, 2, 4, ...` of the rounds that complete within `t0`.
pub fn doubling_schedule(t0: f64) -> Result<Vec<f64>> {
    if !(t0.is_finite() && t0 >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "total budget {t0} cannot finish a first round of budget 1"
        )));
    }
    let mut rounds = Vec::new();
    let mut spent = 0.0;
    let mut next = 1.0;
    while spent + next <= t0 {
        rounds.push(next);
        spent += next;
        next *= 2.0;
    }
    Ok(rounds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingRound {
    pub budget: f64,
    pub chosen_index: Option<usize>,
    /// Why a round produced no selection (budget too small for its grid).
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingOutcome {
    pub outcome: SelectionOutcome,
    pub rounds: Vec<DoublingRound>,
    /// Sum of the budgets of all rounds run.
    pub budget_used: f64,
    pub last_round_budget: f64,
}

/// Runs [`select_nested`] with budget guesses `1, 2, 4, ...` while the next
/// round still fits in `t0`; returns the last round's selection. Each round
/// draws from its own streams.
pub fn doubling_select(
    hierarchy: &[ModelClassSpec],
    learner: &dyn Learner,
    source: &dyn DataSource,
    t0: f64,
    config: &NestedConfig,
) -> Result<DoublingOutcome> {
    let budgets = doubling_schedule(t0)?;
    let mut rounds = Vec::with_capacity(budgets.len());
    let mut last = None;
    for (r, &budget) in budgets.iter().enumerate() {
        let round_config = NestedConfig {
            trial: (config.trial << 6) | r as u64,
            ..*config
        };
        match select_nested(hierarchy, learner, source, budget, &round_config) {
            Ok(out) => {
                rounds.push(DoublingRound {
                    budget,
                    chosen_index: Some(out.chosen_index),
                    skipped: None,
                });
                last = Some(out);
            }
            Err(e @ Error::BudgetTooSmall { .. }) => {
                rounds.push(DoublingRound {
                    budget,
                    chosen_index: None,
                    skipped: Some(e.to_string()),
                });
                last = None;
            }
            Err(e) => return Err(e),
        }
    }
    let last_round_budget = *budgets.last().expect("t0 >= 1 admits a first round");
    let outcome = last.ok_or(Error::BudgetTooSmall {
        class: 1,
        budget: last_round_budget,
    })?;
    Ok(DoublingOutcome {
        outcome,
        rounds,
        budget_used: budgets.iter().sum(),
        last_round_budget,
    })
}
