//! Domain types shared by every selector: samples, linear models, model
//! classes, budget schedules and concentration constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalties::PenaltySpec;

/// One observation `Z = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// A linear predictor `x -> <w, x>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// The structural parameter that orders a nested hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    /// `{ theta : |theta|_2 <= radius }` over all ambient coordinates.
    BallRadius { radius: f64 },
    /// `{ theta : theta_j = 0 for j > dims, |theta|_2 <= radius }`.
    ActiveDims { dims: usize, radius: f64 },
}

impl Structure {
    pub fn radius(&self) -> f64 {
        match *self {
            Structure::BallRadius { radius } | Structure::ActiveDims { radius, .. } => radius,
        }
    }

    /// Number of coordinates the class may use inside an ambient space of
    /// dimension `ambient`.
    pub fn active_dims(&self, ambient: usize) -> usize {
        match *self {
            Structure::BallRadius { .. } => ambient,
            Structure::ActiveDims { dims, .. } => dims.min(ambient),
        }
    }
}

/// One model class `F_i` of a hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClassSpec {
    /// 1-based class index.
    pub index: usize,
    pub structure: Structure,
    /// Samples the learner can process per budget quantum.
    pub samples_per_quantum: f64,
    pub penalty: PenaltySpec,
    /// Constant added to every loss evaluated for this class. Zero for
    /// ordinary classes; nonzero values build classes with a known risk gap.
    #[serde(default)]
    pub loss_offset: f64,
}

impl ModelClassSpec {
    pub fn new(
        index: usize,
        structure: Structure,
        samples_per_quantum: f64,
        penalty: PenaltySpec,
    ) -> Self {
        Self {
            index,
            structure,
            samples_per_quantum,
            penalty,
            loss_offset: 0.0,
        }
    }

    pub fn with_loss_offset(mut self, offset: f64) -> Self {
        self.loss_offset = offset;
        self
    }

    pub fn radius(&self) -> f64 {
        self.structure.radius()
    }

    pub fn validate(&self) -> Result<()> {
        if self.index == 0 {
            return Err(Error::InvalidArgument("class indices start at 1".into()));
        }
        let r = self.radius();
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "class {}: radius must be finite and nonnegative",
                self.index
            )));
        }
        if let Structure::ActiveDims { dims: 0, .. } = self.structure {
            return Err(Error::InvalidArgument(format!(
                "class {}: active dimension must be positive",
                self.index
            )));
        }
        if !(self.samples_per_quantum.is_finite() && self.samples_per_quantum > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "class {}: samples per quantum must be positive",
                self.index
            )));
        }
        if !self.loss_offset.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "class {}: loss offset must be finite",
                self.index
            )));
        }
        self.penalty.validate()
    }
}

/// Checks that `classes` form a nested hierarchy: indices `1..=K` in order,
/// structure strictly increasing, per-quantum sample rates nonincreasing.
pub fn validate_nested(classes: &[ModelClassSpec]) -> Result<()> {
    if classes.is_empty() {
        return Err(Error::NotNested("empty hierarchy".into()));
    }
    for (pos, c) in classes.iter().enumerate() {
        c.validate()?;
        if c.index != pos + 1 {
            return Err(Error::NotNested(format!(
                "class at position {} has index {}",
                pos + 1,
                c.index
            )));
        }
    }
    for w in classes.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let increasing = match (a.structure, b.structure) {
            (Structure::BallRadius { radius: ra }, Structure::BallRadius { radius: rb }) => ra < rb,
            (
                Structure::ActiveDims {
                    dims: da,
                    radius: ra,
                },
                Structure::ActiveDims {
                    dims: db,
                    radius: rb,
                },
            ) => da < db && ra <= rb,
            _ => false,
        };
        if !increasing {
            return Err(Error::NotNested(format!(
                "structure of class {} does not strictly exceed class {}",
                b.index, a.index
            )));
        }
        if b.samples_per_quantum > a.samples_per_quantum {
            return Err(Error::NotNested(format!(
                "class {} processes more samples per quantum than class {}",
                b.index, a.index
            )));
        }
    }
    Ok(())
}

/// Per-class map from a compute budget to a trainable sample count,
/// `n_i(T) = rate_i * T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSchedule {
    pub total_budget: f64,
    /// `rates[i - 1]` is the per-quantum sample rate of class `i`.
    pub rates: Vec<f64>,
}

impl BudgetSchedule {
    pub fn new(total_budget: f64, rates: Vec<f64>) -> Result<Self> {
        if !(total_budget.is_finite() && total_budget >= 0.0) {
            return Err(Error::InvalidArgument("budget must be finite and nonnegative".into()));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidArgument("sample rates must be positive".into()));
        }
        Ok(Self {
            total_budget,
            rates,
        })
    }

    pub fn from_classes(classes: &[ModelClassSpec], total_budget: f64) -> Result<Self> {
        Self::new(
            total_budget,
            classes.iter().map(|c| c.samples_per_quantum).collect(),
        )
    }

    /// Norm-ball hierarchy: every class costs `d` per sample, so
    /// `n_i(T) = n T / d` for all `i`.
    pub fn constant(n: f64, d: f64, classes: usize, total_budget: f64) -> Result<Self> {
        Self::new(total_budget, vec![n / d; classes])
    }

    /// Increasing-dimension hierarchy: `n_i(T) = n T / d_i`.
    pub fn per_dimension(n: f64, dims: &[usize], total_budget: f64) -> Result<Self> {
        Self::new(total_budget, dims.iter().map(|&d| n / d as f64).collect())
    }

    pub fn num_classes(&self) -> usize {
        self.rates.len()
    }

    pub fn rate(&self, class_index: usize) -> Result<f64> {
        class_index
            .checked_sub(1)
            .and_then(|i| self.rates.get(i))
            .copied()
            .ok_or(Error::UnknownClass(class_index))
    }

    /// Real-valued `n_i(budget)` before flooring.
    pub fn raw_samples(&self, class_index: usize, budget: f64) -> Result<f64> {
        Ok(self.rate(class_index)? * budget)
    }

    /// Per-sample compute cost of class `i`, in quanta.
    pub fn cost_per_sample(&self, class_index: usize) -> Result<f64> {
        Ok(1.0 / self.rate(class_index)?)
    }
}

/// `floor(n_i(budget))`: the number of samples class `class_index` can
/// train on with `budget` quanta. Zero is a valid answer.
pub fn samples_for_budget(
    schedule: &BudgetSchedule,
    class_index: usize,
    budget: f64,
) -> Result<u64> {
    let rate = schedule.rate(class_index)?;
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid budget {budget}")));
    }
    if budget > schedule.total_budget * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} exceeds total budget {}",
            schedule.total_budget
        )));
    }
    Ok(floor_count(rate * budget))
}

/// Floors a nonnegative real sample count, absorbing representation error
/// such as `2.9999999999999996`.
pub fn floor_count(v: f64) -> u64 {
    let f = v.floor();
    if v - f > 1.0 - 1e-9 {
        f as u64 + 1
    } else {
        f as u64
    }
}

/// Constants of the uniform concentration assumptions plus the bound on
/// the best risk of class 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConcentrationConstants {
    pub c1: f64,
    pub c2: f64,
    /// Confidence parameter; failure probability scales like `e^{-m}`.
    pub m: f64,
    /// Upper bound `B` on the best risk of class 1.
    pub bound: f64,
}

impl Default for ConcentrationConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            m: 1.0,
            bound: 1.0,
        }
    }
}

impl ConcentrationConstants {
    pub fn new(c1: f64, c2: f64, m: f64, bound: f64) -> Result<Self> {
        let c = Self { c1, c2, m, bound };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c1.is_finite()
            && self.c1 > 0.0
            && self.c2.is_finite()
            && self.c2 >= 0.0
            && self.m.is_finite()
            && self.m >= 0.0
            && self.bound.is_finite()
            && self.bound > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid concentration constants {self:?}"
            )))
        }
    }
}
