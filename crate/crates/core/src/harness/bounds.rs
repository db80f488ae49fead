//! Right-hand sides of the oracle inequalities the harness checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalties::grid_samples;
use crate::types::{BudgetSchedule, ConcentrationConstants, ModelClassSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `R_i* + 4 gamma_i + c2 sqrt(8 (m + log s) / n_i)`.
    SlowRate,
    /// `R_i* + 40 s gamma_i + 10 s c2 (m + log s) / n_i`.
    FastRate,
}

/// Per-class ingredients of the bound, at `n = n_i(T / s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub risk: f64,
    pub gamma: f64,
    pub n: u64,
}

fn term_value(kind: BoundKind, t: &BoundTerm, s: usize, consts: &ConcentrationConstants) -> f64 {
    let n = t.n as f64;
    let log_s = (s as f64).ln();
    match kind {
        BoundKind::SlowRate => {
            t.risk + 4.0 * t.gamma + consts.c2 * (8.0 * (consts.m + log_s) / n).sqrt()
        }
        BoundKind::FastRate => {
            let s = s as f64;
            t.risk + 40.0 * s * t.gamma + 10.0 * s * consts.c2 * (consts.m + log_s) / n
        }
    }
}

/// Minimum of the bound expression over the given classes.
pub fn bound_rhs_from_terms(
    kind: BoundKind,
    terms: &[BoundTerm],
    s: usize,
    consts: &ConcentrationConstants,
) -> Result<f64> {
    if s == 0 {
        return Err(Error::InvalidArgument("grid size must be at least 1".into()));
    }
    if terms.is_empty() {
        return Err(Error::MissingReference(1));
    }
    if terms.iter().any(|t| t.n == 0) {
        return Err(Error::NoSamples);
    }
    Ok(terms
        .iter()
        .map(|t| term_value(kind, t, s, consts))
        .fold(f64::INFINITY, f64::min))
}

/// Bound over every class of `hierarchy` that gets at least one sample (and
/// a defined penalty) at budget `T / s`. `reference_risks[i - 1]` is `R_i*`.
pub fn compute_bound_rhs(
    kind: BoundKind,
    hierarchy: &[ModelClassSpec],
    reference_risks: &[f64],
    total_budget: f64,
    s: usize,
    consts: &ConcentrationConstants,
) -> Result<f64> {
    if reference_risks.len() < hierarchy.len() {
        return Err(Error::MissingReference(reference_risks.len() + 1));
    }
    let schedule = BudgetSchedule::from_classes(hierarchy, total_budget)?;
    let mut terms = Vec::new();
    for (class, &risk) in hierarchy.iter().zip(reference_risks) {
        if !risk.is_finite() {
            return Err(Error::MissingReference(class.index));
        }
        let n = match grid_samples(&schedule, class.index, total_budget, s) {
            Ok(n) => n,
            Err(Error::ZeroSamples { .. }) => continue,
            Err(e) => return Err(e),
        };
        let gamma = match class.penalty.eval(n as f64) {
            Ok(g) => g,
            Err(Error::PenaltyUndefined { .. }) => continue,
            Err(e) => return Err(e),
        };
        terms.push(BoundTerm { risk, gamma, n });
    }
    if terms.is_empty() {
        return Err(Error::BudgetTooSmall {
            class: 1,
            budget: total_budget / s as f64,
        });
    }
    bound_rhs_from_terms(kind, &terms, s, consts)
}
