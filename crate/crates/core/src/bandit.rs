//! Optimistic quantum-by-quantum allocation over an unstructured collection
//! of classes.

use serde::{Deserialize, Serialize};

use crate::datagen::{DataSource, Phase, StreamId};
use crate::error::{Error, Result};
use crate::grid::argmin_smallest;
use crate::learners::{Learner, SgdState};
use crate::nested::SCORE_TIE_TOL;
use crate::risk::RiskAccumulator;
use crate::types::{floor_count, ConcentrationConstants, LinearModel, ModelClassSpec, Sample};

/// `emp - pen(n) - sqrt(log K / n) + pen(T n_i)`.
pub fn obj_criterion(emp_risk: f64, pen_at_n: f64, pen_at_tn: f64, k: usize, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("collection is empty".into()));
    }
    Ok(emp_risk - pen_at_n - ((k as f64).ln() / n as f64).sqrt() + pen_at_tn)
}

/// Which round count enters the exploration bonus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogForm {
    /// `log t` at round `t`.
    #[default]
    Anytime,
    /// `log T` in every round.
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BanditConfig {
    pub consts: ConcentrationConstants,
    pub log_form: LogForm,
    /// Multiplier on the exploration bonus; `None` uses `c2`.
    pub bonus_scale: Option<f64>,
    /// Keep the model of every round in the trace.
    pub keep_snapshots: bool,
    pub trial: u64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            consts: ConcentrationConstants::default(),
            log_form: LogForm::Anytime,
            bonus_scale: None,
            keep_snapshots: false,
            trial: 0,
        }
    }
}

/// State of the round loop after round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRound {
    pub t: u64,
    pub chosen: usize,
    /// `obj - bonus` for every class; empty during initialization.
    pub criteria: Vec<f64>,
    /// Subtracted exploration bonus for every class; empty during
    /// initialization.
    pub bonuses: Vec<f64>,
    /// `n_i(t)` for every class when the choice was made.
    pub samples_before: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditTrace {
    pub rounds: u64,
    /// Samples added per quantum, per class.
    pub quantum_samples: Vec<u64>,
    pub log: Vec<BanditRound>,
    /// Final pull counts `T_i(T)`.
    pub counts: Vec<u64>,
    /// Final sample counts `n_i(T)`.
    pub samples: Vec<u64>,
    pub most_frequent: usize,
    pub snapshots: Option<Vec<LinearModel>>,
}

impl BanditTrace {
    /// Chosen class of each round, starting at round 1.
    pub fn choices(&self) -> impl Iterator<Item = usize> + '_ {
        self.log.iter().map(|r| r.chosen)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditOutcome {
    pub trace: BanditTrace,
    /// Average of the round models; present for convex losses.
    pub averaged_model: Option<LinearModel>,
    /// Final model of the most frequently pulled class.
    pub model: LinearModel,
}

/// Largest count, ties to the smallest index (1-based result).
pub fn most_frequent(counts: &[u64]) -> Option<usize> {
    let max = *counts.iter().max()?;
    counts.iter().position(|&c| c == max).map(|p| p + 1)
}

struct Arm<'a> {
    spec: &'a ModelClassSpec,
    stream: Box<dyn Iterator<Item = Sample> + Send>,
    quantum: u64,
    state: Option<SgdState>,
    acc: RiskAccumulator,
    /// Empirical risk of the current model on every sample seen, with offset.
    emp: f64,
    pen_at_tn: f64,
    pulls: u64,
}

impl Arm<'_> {
    fn pull(&mut self, learner: &dyn Learner, dim: usize) -> Result<()> {
        let batch: Vec<Sample> = self.stream.by_ref().take(self.quantum as usize).collect();
        if batch.len() as u64 != self.quantum {
            return Err(Error::InvalidArgument("sample stream ended".into()));
        }
        self.acc.extend(&batch)?;
        let state = learner.fit(self.spec, dim, &batch, self.state.as_ref())?;
        self.emp = self.acc.risk(&state.model)? + self.spec.loss_offset;
        self.state = Some(state);
        self.pulls += 1;
        Ok(())
    }

    fn n(&self) -> u64 {
        self.acc.len()
    }

    fn model(&self) -> &LinearModel {
        &self.state.as_ref().expect("pulled at least once").model
    }
}

fn check_collection(classes: &[ModelClassSpec]) -> Result<()> {
    if classes.is_empty() {
        return Err(Error::InvalidArgument("collection is empty".into()));
    }
    for (p, c) in classes.iter().enumerate() {
        c.validate()?;
        if c.index != p + 1 {
            return Err(Error::InvalidArgument(format!(
                "class at position {} has index {}; indices must run 1..K",
                p + 1,
                c.index
            )));
        }
    }
    Ok(())
}

/// Per-quantum sample count of a class.
pub fn quantum_samples(class: &ModelClassSpec) -> Result<u64> {
    let q = floor_count(class.samples_per_quantum);
    if q == 0 {
        return Err(Error::InvalidArgument(format!(
            "class {} draws no samples per quantum",
            class.index
        )));
    }
    Ok(q)
}

/// Runs `rounds` quanta: one per class first, then one per round to the
/// class with the smallest optimistic criterion.
pub fn bandit_select(
    classes: &[ModelClassSpec],
    learner: &dyn Learner,
    source: &dyn DataSource,
    rounds: u64,
    config: &BanditConfig,
) -> Result<BanditOutcome> {
    check_collection(classes)?;
    config.consts.validate()?;
    let k = classes.len();
    if rounds < k as u64 {
        return Err(Error::BelowExplorationFloor { rounds, classes: k });
    }
    let dim = source.dim();
    let bonus_scale = config.bonus_scale.unwrap_or(config.consts.c2);

    let mut arms = classes
        .iter()
        .map(|spec| {
            let quantum = quantum_samples(spec)?;
            Ok(Arm {
                spec,
                stream: source.open(StreamId::new(Phase::Bandit, spec.index, config.trial))?,
                quantum,
                state: None,
                acc: RiskAccumulator::new(learner.loss(), dim),
                emp: 0.0,
                pen_at_tn: spec.penalty.eval(rounds as f64 * quantum as f64)?,
                pulls: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let convex = learner.loss().is_convex();
    let mut sum = vec![0.0; dim];
    let mut snapshots = config.keep_snapshots.then(Vec::new);
    let mut log = Vec::with_capacity(rounds as usize);

    let record = |model: &LinearModel, sum: &mut [f64], snapshots: &mut Option<Vec<LinearModel>>| {
        for (a, b) in sum.iter_mut().zip(&model.weights) {
            *a += b;
        }
        if let Some(s) = snapshots.as_mut() {
            s.push(model.clone());
        }
    };

    for (p, arm) in arms.iter_mut().enumerate() {
        arm.pull(learner, dim)?;
        record(arm.model(), &mut sum, &mut snapshots);
        log.push(BanditRound {
            t: p as u64 + 1,
            chosen: p + 1,
            criteria: Vec::new(),
            bonuses: Vec::new(),
            samples_before: Vec::new(),
        });
    }

    for t in (k as u64 + 1)..=rounds {
        let log_term = match config.log_form {
            LogForm::Anytime => (t as f64).ln(),
            LogForm::Horizon => (rounds as f64).ln(),
        };
        let mut criteria = Vec::with_capacity(k);
        let mut bonuses = Vec::with_capacity(k);
        let mut samples_before = Vec::with_capacity(k);
        for arm in &arms {
            let n = arm.n();
            let bonus = bonus_scale * (log_term / n as f64).sqrt();
            let crit = match arm.spec.penalty.eval(n as f64) {
                Ok(pen_n) => obj_criterion(arm.emp, pen_n, arm.pen_at_tn, k, n)? - bonus,
                // too few samples for the penalty to be defined: explore
                Err(Error::PenaltyUndefined { .. }) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            criteria.push(crit);
            bonuses.push(bonus);
            samples_before.push(n);
        }
        let chosen = argmin_smallest(&criteria, SCORE_TIE_TOL).expect("nonempty collection");
        arms[chosen].pull(learner, dim)?;
        record(arms[chosen].model(), &mut sum, &mut snapshots);
        log.push(BanditRound {
            t,
            chosen: chosen + 1,
            criteria,
            bonuses,
            samples_before,
        });
    }

    let counts: Vec<u64> = arms.iter().map(|a| a.pulls).collect();
    let best = most_frequent(&counts).expect("nonempty collection");
    let averaged_model = convex.then(|| {
        LinearModel::new(sum.iter().map(|v| v / rounds as f64).collect())
    });
    Ok(BanditOutcome {
        trace: BanditTrace {
            rounds,
            quantum_samples: arms.iter().map(|a| a.quantum).collect(),
            log,
            samples: arms.iter().map(|a| a.n()).collect(),
            counts,
            most_frequent: best,
            snapshots,
        },
        averaged_model,
        model: arms[best - 1].model().clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessGap {
    /// `Delta_i`, aligned with class positions.
    pub gaps: Vec<f64>,
    /// 1-based index of the class with the smallest penalized risk.
    pub optimal_index: usize,
}

/// Gaps from per-class penalized risks `R_i* + gamma_i(T n_i)`.
pub fn excess_gaps_from_penalized(penalized: &[f64]) -> Result<ExcessGap> {
    if let Some(p) = penalized.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "penalized risk of class {} is not finite",
            p + 1
        )));
    }
    let best = argmin_smallest(penalized, 0.0).ok_or(Error::NoSamples)?;
    let min = penalized[best];
    Ok(ExcessGap {
        gaps: penalized.iter().map(|v| (v - min).max(0.0)).collect(),
        optimal_index: best + 1,
    })
}

/// `Delta_i = R_i* + gamma_i(T n_i) - min_j (R_j* + gamma_j(T n_j))`.
pub fn excess_gaps(
    classes: &[ModelClassSpec],
    oracle_risks: &[f64],
    rounds: u64,
) -> Result<ExcessGap> {
    if classes.len() != oracle_risks.len() {
        return Err(Error::MissingReference(classes.len().min(oracle_risks.len()) + 1));
    }
    let penalized: Vec<f64> = classes
        .iter()
        .zip(oracle_risks)
        .map(|(c, r)| Ok(r + c.penalty.eval(rounds as f64 * quantum_samples(c)? as f64)?))
        .collect::<Result<_>>()?;
    excess_gaps_from_penalized(&penalized)
}

/// `sum_i Delta_i T_i(T)`.
pub fn regret(trace: &BanditTrace, gaps: &ExcessGap) -> Result<f64> {
    regret_from_counts(&trace.counts, gaps)
}

pub fn regret_from_counts(counts: &[u64], gaps: &ExcessGap) -> Result<f64> {
    if gaps.gaps.len() < counts.len() {
        return Err(Error::MissingReference(gaps.gaps.len() + 1));
    }
    Ok(counts.iter().zip(&gaps.gaps).map(|(&c, g)| c as f64 * g).sum())
}
