//! Fast-rate selection: each grid candidate must beat every smaller grid
//! class on the candidate's own sample set.

use serde::{Deserialize, Serialize};

use crate::datagen::{DataSource, StreamId};
use crate::error::{Error, Result};
use crate::grid::{CoarseGrid, DEFAULT_MAX_PROBE};
use crate::learners::Learner;
use crate::loss::LossKind;
use crate::nested::{
    budget_spent, plan_grid, train_grid, ClassDiagnostics, Composite, SelectionOutcome,
};
use crate::penalties::{FAST_COMPOSITE_A, FAST_COMPOSITE_B};
use crate::risk::mean_loss;
use crate::types::{ConcentrationConstants, LinearModel, ModelClassSpec, Sample};

/// Multipliers of the pairwise condition: `zeta1` on penalties, `zeta2` on
/// the confidence term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastWeights {
    pub zeta1: f64,
    pub zeta2: f64,
}

impl Default for FastWeights {
    fn default() -> Self {
        Self {
            zeta1: 8.5,
            zeta2: 3.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastConfig {
    pub consts: ConcentrationConstants,
    pub lambda: f64,
    pub weights: FastWeights,
    /// Grid penalty coefficients, `a gamma + b (c2 m + 2 log s) / n`.
    pub penbar_a: f64,
    pub penbar_b: f64,
    pub max_probe: usize,
    pub trial: u64,
}

impl Default for FastConfig {
    fn default() -> Self {
        Self {
            consts: ConcentrationConstants::default(),
            lambda: 1.0,
            weights: FastWeights::default(),
            penbar_a: FAST_COMPOSITE_A,
            penbar_b: FAST_COMPOSITE_B,
            max_probe: DEFAULT_MAX_PROBE,
            trial: 0,
        }
    }
}

/// `emp_fi + zeta1 pen_i + zeta2 c2 (m + log s) / n_i <= emp_fj + zeta1 pen_j`,
/// where both risks are measured on the candidate's samples.
#[allow(clippy::too_many_arguments)]
pub fn fast_condition(
    emp_fi_on_i: f64,
    emp_fj_on_i: f64,
    pen_i: f64,
    pen_j: f64,
    c2: f64,
    m: f64,
    s: usize,
    n_i: u64,
    weights: &FastWeights,
) -> Result<bool> {
    Ok(candidate_side(emp_fi_on_i, pen_i, c2, m, s, n_i, weights)?
        <= emp_fj_on_i + weights.zeta1 * pen_j)
}

fn candidate_side(
    emp: f64,
    pen: f64,
    c2: f64,
    m: f64,
    s: usize,
    n: u64,
    weights: &FastWeights,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if s == 0 {
        return Err(Error::InvalidArgument("grid size must be at least 1".into()));
    }
    Ok(emp + weights.zeta1 * pen + weights.zeta2 * c2 * (m + (s as f64).ln()) / n as f64)
}

/// A trained grid class together with the samples it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct FastCandidate {
    pub index: usize,
    pub model: LinearModel,
    pub penalty: f64,
    pub loss_offset: f64,
    pub stream: StreamId,
    pub samples: Vec<Sample>,
}

/// One evaluation of a smaller class's model on a candidate's samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEval {
    pub candidate: usize,
    pub other: usize,
    /// Stream that produced the samples the risk was measured on.
    pub stream: StreamId,
    pub n_samples: u64,
    pub risk: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastChoice {
    /// Position in the candidate list.
    pub position: usize,
    /// Candidate-side value of the condition for every candidate.
    pub lhs: Vec<f64>,
    /// Own empirical risk of every candidate.
    pub empirical: Vec<f64>,
    pub cross_evals: Vec<CrossEval>,
}

/// Scans candidates from the largest down and returns the first one whose
/// condition holds against every smaller candidate. The smallest passes
/// vacuously.
pub fn choose_largest_passing(
    candidates: &[FastCandidate],
    loss: LossKind,
    consts: &ConcentrationConstants,
    s: usize,
    weights: &FastWeights,
) -> Result<FastChoice> {
    if candidates.is_empty() {
        return Err(Error::NoSamples);
    }
    let empirical: Vec<f64> = candidates
        .iter()
        .map(|c| Ok(mean_loss(&c.model, &c.samples, loss)? + c.loss_offset))
        .collect::<Result<_>>()?;
    let lhs: Vec<f64> = candidates
        .iter()
        .zip(&empirical)
        .map(|(c, &e)| {
            candidate_side(e, c.penalty, consts.c2, consts.m, s, c.samples.len() as u64, weights)
        })
        .collect::<Result<_>>()?;

    let mut cross_evals = Vec::new();
    for pos in (1..candidates.len()).rev() {
        let cand = &candidates[pos];
        let mut all = true;
        for other in &candidates[..pos] {
            let risk = mean_loss(&other.model, &cand.samples, loss)? + other.loss_offset;
            let passed = lhs[pos] <= risk + weights.zeta1 * other.penalty;
            cross_evals.push(CrossEval {
                candidate: cand.index,
                other: other.index,
                stream: cand.stream,
                n_samples: cand.samples.len() as u64,
                risk,
                passed,
            });
            if !passed {
                all = false;
                break;
            }
        }
        if all {
            return Ok(FastChoice {
                position: pos,
                lhs,
                empirical,
                cross_evals,
            });
        }
    }
    Ok(FastChoice {
        position: 0,
        lhs,
        empirical,
        cross_evals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastOutcome {
    pub outcome: SelectionOutcome,
    pub cross_evals: Vec<CrossEval>,
}

impl FastOutcome {
    pub fn grid(&self) -> &CoarseGrid {
        &self.outcome.grid
    }
}

/// The coarse grid built from the fast composite penalty.
pub fn fast_grid(
    hierarchy: &[ModelClassSpec],
    total_budget: f64,
    config: &FastConfig,
) -> Result<CoarseGrid> {
    Ok(plan_grid(
        hierarchy,
        total_budget,
        &config.consts,
        config.lambda,
        config.max_probe,
        Composite::Fast {
            a: config.penbar_a,
            b: config.penbar_b,
        },
    )?
    .grid)
}

/// Trains every class of the fast-rate grid and keeps their samples.
pub fn train_fast_candidates(
    hierarchy: &[ModelClassSpec],
    learner: &dyn Learner,
    source: &dyn DataSource,
    total_budget: f64,
    config: &FastConfig,
) -> Result<(Vec<FastCandidate>, CoarseGrid, f64)> {
    let plan = plan_grid(
        hierarchy,
        total_budget,
        &config.consts,
        config.lambda,
        config.max_probe,
        Composite::Fast {
            a: config.penbar_a,
            b: config.penbar_b,
        },
    )?;
    let trained = train_grid(hierarchy, learner, source, &plan, total_budget, config.trial, true)?;
    let spent = budget_spent(&plan, &trained)?;
    let candidates = trained
        .into_iter()
        .map(|t| FastCandidate {
            index: t.index,
            model: t.state.model,
            penalty: t.gamma,
            loss_offset: hierarchy[t.index - 1].loss_offset,
            stream: t.stream,
            samples: t.samples.expect("samples retained"),
        })
        .collect();
    Ok((candidates, plan.grid, spent))
}

/// Fast-rate selection over the coarse grid built from the fast composite
/// penalty.
pub fn select_fast(
    hierarchy: &[ModelClassSpec],
    learner: &dyn Learner,
    source: &dyn DataSource,
    total_budget: f64,
    config: &FastConfig,
) -> Result<FastOutcome> {
    let (candidates, grid, budget_used) =
        train_fast_candidates(hierarchy, learner, source, total_budget, config)?;
    let choice = choose_largest_passing(
        &candidates,
        learner.loss(),
        &config.consts,
        grid.s,
        &config.weights,
    )?;
    let per_class = candidates
        .iter()
        .enumerate()
        .map(|(p, c)| ClassDiagnostics {
            index: c.index,
            n_samples: c.samples.len() as u64,
            empirical_risk: choice.empirical[p],
            penalty: c.penalty,
            penbar: grid.penbars[p],
            score: choice.lhs[p],
            stream: c.stream,
        })
        .collect();
    let chosen = &candidates[choice.position];
    Ok(FastOutcome {
        outcome: SelectionOutcome {
            chosen_index: chosen.index,
            model: chosen.model.clone(),
            empirical_risk: choice.empirical[choice.position],
            score: choice.lhs[choice.position],
            per_class,
            budget_used,
            grid,
        },
        cross_evals: choice.cross_evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Phase;

    fn w() -> FastWeights {
        FastWeights::default()
    }

    #[test]
    fn condition_example() {
        assert!(fast_condition(0.2, 0.5, 0.02, 0.01, 1.0, 1.0, 1, 100, &w()).unwrap());
    }

    #[test]
    fn identical_models_fail() {
        assert!(!fast_condition(0.3, 0.3, 0.05, 0.05, 1.0, 1.0, 3, 50, &w()).unwrap());
    }

    #[test]
    fn dominance_passes() {
        assert!(fast_condition(0.3, 1e9, 0.5, 0.0, 1.0, 2.0, 4, 10, &w()).unwrap());
    }

    #[test]
    fn zero_samples_error() {
        assert!(fast_condition(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1, 0, &w()).is_err());
    }

    fn cand(index: usize, w0: f64, samples: Vec<Sample>) -> FastCandidate {
        FastCandidate {
            index,
            model: LinearModel::new(vec![w0]),
            penalty: 0.01,
            loss_offset: 0.0,
            stream: StreamId::new(Phase::Train, index, 0),
            samples,
        }
    }

    #[test]
    fn single_candidate_is_chosen() {
        let s = vec![Sample::new(vec![1.0], 1.0)];
        let c = choose_largest_passing(
            &[cand(1, 0.0, s)],
            LossKind::Squared,
            &ConcentrationConstants::default(),
            1,
            &w(),
        )
        .unwrap();
        assert_eq!(c.position, 0);
        assert!(c.cross_evals.is_empty());
    }

    #[test]
    fn dominating_larger_class_is_chosen() {
        let data: Vec<Sample> = (0..200).map(|_| Sample::new(vec![1.0], 3.0)).collect();
        let c = choose_largest_passing(
            &[cand(1, 0.0, data.clone()), cand(2, 3.0, data)],
            LossKind::Squared,
            &ConcentrationConstants::default(),
            2,
            &w(),
        )
        .unwrap();
        assert_eq!(c.position, 1);
        assert_eq!(c.cross_evals.len(), 1);
        assert_eq!(c.cross_evals[0].risk, 9.0);
    }

    #[test]
    fn huge_zeta2_forces_smallest() {
        let data: Vec<Sample> = (0..50).map(|_| Sample::new(vec![1.0], 3.0)).collect();
        let weights = FastWeights {
            zeta1: 8.5,
            zeta2: 1e12,
        };
        let c = choose_largest_passing(
            &[cand(1, 0.0, data.clone()), cand(2, 3.0, data.clone()), cand(3, 3.0, data)],
            LossKind::Squared,
            &ConcentrationConstants::default(),
            3,
            &weights,
        )
        .unwrap();
        assert_eq!(c.position, 0);
    }
}
