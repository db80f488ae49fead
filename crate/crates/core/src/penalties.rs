//! Complexity penalties `gamma_i(n)` and the composite grid penalties built
//! from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{samples_for_budget, BudgetSchedule, ConcentrationConstants};

/// Exponent used for the power-law envelope of fast-rate penalties.
pub const FAST_ENVELOPE_ALPHA: f64 = 0.9;

/// Default coefficients of the fast-rate composite penalty,
/// `a * gamma + b * (c2 m + 2 log s) / n`.
pub const FAST_COMPOSITE_A: f64 = 20.0;
pub const FAST_COMPOSITE_B: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// `2 r xbound / sqrt(n)` for an L2 ball of radius `r`.
    RademacherBall { radius: f64, xbound: f64 },
    /// `sqrt(d / n)`.
    Vc { dims: usize },
    /// `c d log(n / d) / n`, defined for `n > d`.
    Fast { c: f64, dims: usize },
    /// `kappa n^(-alpha)`.
    PowerLaw { kappa: f64, alpha: f64 },
}

impl PenaltySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PenaltySpec::RademacherBall { radius, xbound } => {
                radius.is_finite() && radius >= 0.0 && xbound.is_finite() && xbound >= 0.0
            }
            PenaltySpec::Vc { dims } => dims > 0,
            PenaltySpec::Fast { c, dims } => c.is_finite() && c > 0.0 && dims > 0,
            PenaltySpec::PowerLaw { kappa, alpha } => {
                kappa.is_finite() && kappa > 0.0 && alpha.is_finite() && alpha > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid penalty {self:?}")))
        }
    }

    /// `gamma(n)` at a (possibly fractional) sample size.
    pub fn eval(&self, n: f64) -> Result<f64> {
        match *self {
            PenaltySpec::RademacherBall { radius, xbound } => {
                rademacher_ball_penalty(radius, xbound, n)
            }
            PenaltySpec::Vc { dims } => vc_penalty(dims, n),
            PenaltySpec::Fast { c, dims } => fast_penalty(c, dims, n),
            PenaltySpec::PowerLaw { kappa, alpha } => {
                check_n(n)?;
                Ok(kappa * n.powf(-alpha))
            }
        }
    }

    /// `(kappa, alpha)` with `gamma(n) <= kappa n^(-alpha)` for every `n`
    /// where the penalty is defined.
    pub fn envelope(&self) -> (f64, f64) {
        match *self {
            PenaltySpec::RademacherBall { radius, xbound } => (2.0 * radius * xbound, 0.5),
            PenaltySpec::Vc { dims } => ((dims as f64).sqrt(), 0.5),
            PenaltySpec::Fast { c, dims } => {
                // sup_n log(n/d) n^(1-alpha) / n is attained at log(n/d) = 1/(1-alpha).
                let a = FAST_ENVELOPE_ALPHA;
                let d = dims as f64;
                let l = 1.0 / (1.0 - a);
                let n_star = d * l.exp();
                (c * d * l * n_star.powf(a - 1.0), a)
            }
            PenaltySpec::PowerLaw { kappa, alpha } => (kappa, alpha),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PenaltySpec::RademacherBall { .. } => "rademacher_ball",
            PenaltySpec::Vc { .. } => "vc_dim",
            PenaltySpec::Fast { .. } => "fast_dim",
            PenaltySpec::PowerLaw { .. } => "power_law",
        }
    }
}

fn check_n(n: f64) -> Result<()> {
    if n.is_finite() && n >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "penalty needs at least one sample (n = {n})"
        )))
    }
}

pub fn rademacher_ball_penalty(r: f64, xbound: f64, n: f64) -> Result<f64> {
    check_n(n)?;
    Ok(2.0 * r * xbound / n.sqrt())
}

pub fn vc_penalty(d: usize, n: f64) -> Result<f64> {
    check_n(n)?;
    Ok((d as f64 / n).sqrt())
}

pub fn fast_penalty(c: f64, d: usize, n: f64) -> Result<f64> {
    let df = d as f64;
    if !(n.is_finite() && n > df) {
        return Err(Error::PenaltyUndefined { dims: d, n });
    }
    Ok(c * df * (n / df).ln() / n)
}

/// `2 gamma + c2 sqrt(2 (m + log s) / n)` from an already evaluated `gamma`.
pub fn composite_penalty(
    gamma: f64,
    n: u64,
    s: usize,
    consts: &ConcentrationConstants,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    check_grid_size(s)?;
    let conf = 2.0 * (consts.m + (s as f64).ln()) / n as f64;
    Ok(2.0 * gamma + consts.c2 * conf.sqrt())
}

/// `a gamma + b (c2 m + 2 log s) / n` from an already evaluated `gamma`.
pub fn composite_penalty_fast(
    gamma: f64,
    n: u64,
    s: usize,
    consts: &ConcentrationConstants,
    a: f64,
    b: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    check_grid_size(s)?;
    Ok(a * gamma + b * (consts.c2 * consts.m + 2.0 * (s as f64).ln()) / n as f64)
}

fn check_grid_size(s: usize) -> Result<()> {
    if s == 0 {
        Err(Error::InvalidArgument("grid size must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Samples class `class_index` gets at budget `T / s`, failing on zero.
pub fn grid_samples(
    schedule: &BudgetSchedule,
    class_index: usize,
    total_budget: f64,
    s: usize,
) -> Result<u64> {
    check_grid_size(s)?;
    let budget = total_budget / s as f64;
    let n = samples_for_budget(schedule, class_index, budget)?;
    if n == 0 {
        return Err(Error::ZeroSamples {
            class: class_index,
            budget,
        });
    }
    Ok(n)
}

/// Composite penalty of class `class_index` at budget `T / s` for the
/// slow-rate selector.
pub fn penbar(
    pen: &PenaltySpec,
    schedule: &BudgetSchedule,
    class_index: usize,
    total_budget: f64,
    s: usize,
    consts: &ConcentrationConstants,
) -> Result<f64> {
    let n = grid_samples(schedule, class_index, total_budget, s)?;
    composite_penalty(pen.eval(n as f64)?, n, s, consts)
}

/// Composite penalty of class `class_index` at budget `T / s` for the
/// fast-rate selector.
#[allow(clippy::too_many_arguments)]
pub fn penbar_fast(
    pen: &PenaltySpec,
    schedule: &BudgetSchedule,
    class_index: usize,
    total_budget: f64,
    s: usize,
    consts: &ConcentrationConstants,
    a: f64,
    b: f64,
) -> Result<f64> {
    let n = grid_samples(schedule, class_index, total_budget, s)?;
    composite_penalty_fast(pen.eval(n as f64)?, n, s, consts, a, b)
}
