//! Experiment configuration file: sections `[hierarchy]`, `[generator]`,
//! `[selector]`, `[budget]` and `[constants]`. Every field has a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::{BanditConfig, LogForm};
use crate::datagen::{DataGenKind, DataGenSpec};
use crate::error::{Error, Result};
use crate::fast::{FastConfig, FastWeights};
use crate::grid::DEFAULT_MAX_PROBE;
use crate::learners::{SgdLearner, StepSchedule};
use crate::loss::LossKind;
use crate::nested::NestedConfig;
use crate::penalties::{PenaltySpec, FAST_COMPOSITE_A, FAST_COMPOSITE_B};
use crate::types::{validate_nested, ConcentrationConstants, ModelClassSpec, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Classes restricted to the first `d_i` coordinates.
    Dims,
    /// L2 balls of growing radius over all coordinates.
    Radii,
    /// Classes listed one by one under `classes`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    Vc,
    Rademacher,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRule {
    /// `n / d_i` samples per quantum.
    PerDimension,
    /// `n` samples per quantum for every class.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    pub family: Family,
    pub dims: Vec<usize>,
    /// Ball radius of every `dims` class.
    pub radius: f64,
    pub radii: Vec<f64>,
    pub penalty: PenaltyFamily,
    /// Coefficient of the fast penalty.
    pub penalty_c: f64,
    pub rate: RateRule,
    /// `n`, the base sample rate per quantum.
    pub samples_per_quantum: f64,
    /// Optional per-class loss offsets.
    pub loss_offsets: Vec<f64>,
    pub classes: Vec<ModelClassSpec>,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            family: Family::Dims,
            dims: vec![1, 2, 4, 8, 16],
            radius: 4.0,
            radii: Vec::new(),
            penalty: PenaltyFamily::Vc,
            penalty_c: 1.0,
            rate: RateRule::PerDimension,
            samples_per_quantum: 1.0,
            loss_offsets: Vec::new(),
            classes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: DataGenKind,
    pub ambient_dim: usize,
    pub true_support: usize,
    pub weight_norm: f64,
    pub label_noise: f64,
    pub xbound: f64,
    pub margin: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: DataGenKind::NestedDims,
            ambient_dim: 16,
            true_support: 4,
            weight_norm: 2.0,
            label_noise: 0.1,
            xbound: 1.0,
            margin: 0.0,
            noise: 0.5,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn spec(&self) -> DataGenSpec {
        DataGenSpec {
            kind: self.kind,
            ambient_dim: self.ambient_dim,
            true_support: self.true_support,
            weight_norm: self.weight_norm,
            label_noise: self.label_noise,
            xbound: self.xbound,
            margin: self.margin,
            noise: self.noise,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Nested,
    Fast,
    Bandit,
}

impl SelectorKind {
    pub fn name(&self) -> &'static str {
        match self {
            SelectorKind::Nested => "nested",
            SelectorKind::Fast => "fast",
            SelectorKind::Bandit => "bandit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    pub loss: LossKind,
    pub lambda: f64,
    /// Wrap the nested selector in budget doubling.
    pub doubling: bool,
    pub zeta1: f64,
    pub zeta2: f64,
    pub penbar_a: f64,
    pub penbar_b: f64,
    pub log_form: LogForm,
    pub bonus_scale: Option<f64>,
    pub step_scale: f64,
    pub clip: f64,
    pub max_probe: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        let w = FastWeights::default();
        Self {
            kind: SelectorKind::Nested,
            loss: LossKind::Logistic,
            lambda: 1.0,
            doubling: false,
            zeta1: w.zeta1,
            zeta2: w.zeta2,
            penbar_a: FAST_COMPOSITE_A,
            penbar_b: FAST_COMPOSITE_B,
            log_form: LogForm::Anytime,
            bonus_scale: None,
            step_scale: 1.0,
            clip: 10.0,
            max_probe: DEFAULT_MAX_PROBE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub t0: f64,
    pub k: u32,
}

impl Sweep {
    /// `T0 * 2^j` for `j = 0..k`.
    pub fn budgets(&self) -> Vec<f64> {
        (0..self.k).map(|j| self.t0 * 2f64.powi(j as i32)).collect()
    }
}

impl std::str::FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(vec![format!("budget sweep `{s}` is not of the form T0:K")]);
        let (t0, k) = s.split_once(':').ok_or_else(bad)?;
        Ok(Sweep {
            t0: t0.trim().parse().map_err(|_| bad())?,
            k: k.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// `T`: total quanta for the nested selectors, rounds for the bandit.
    pub total: f64,
    pub sweep: Option<Sweep>,
    pub trials: u64,
    /// Fresh draws per Monte Carlo population-risk estimate.
    pub mc_samples: u64,
    /// Samples for the reference minimizer of each class.
    pub oracle_samples: usize,
    /// Fresh draws for evaluating each reference minimizer.
    pub oracle_mc: u64,
    /// Tolerated violation frequency in `bench --check`.
    pub max_violation_rate: Option<f64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            total: 10_000.0,
            sweep: None,
            trials: 10,
            mc_samples: 100_000,
            oracle_samples: 100_000,
            oracle_mc: 200_000,
            max_violation_rate: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub c1: f64,
    pub c2: f64,
    pub m: f64,
    /// Bound on the best risk of class 1; defaults to the loss of the zero
    /// predictor on the generator.
    pub bound: Option<f64>,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let c = ConcentrationConstants::default();
        Self {
            c1: c.c1,
            c2: c.c2,
            m: c.m,
            bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hierarchy: HierarchyConfig,
    pub generator: GeneratorConfig,
    pub selector: SelectorConfig,
    pub budget: BudgetConfig,
    pub constants: ConstantsConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn budgets(&self) -> Vec<f64> {
        match self.budget.sweep {
            Some(s) => s.budgets(),
            None => vec![self.budget.total],
        }
    }

    pub fn consts(&self) -> ConcentrationConstants {
        let c = &self.constants;
        ConcentrationConstants {
            c1: c.c1,
            c2: c.c2,
            m: c.m,
            bound: c
                .bound
                .unwrap_or_else(|| self.generator.spec().risk_of_zero(self.selector.loss)),
        }
    }

    pub fn learner(&self) -> SgdLearner {
        SgdLearner::new(
            self.selector.loss,
            StepSchedule {
                xbound: self.generator.xbound,
                clip: self.selector.clip,
                scale: self.selector.step_scale,
            },
        )
    }

    pub fn nested_config(&self, trial: u64) -> NestedConfig {
        NestedConfig {
            consts: self.consts(),
            lambda: self.selector.lambda,
            max_probe: self.selector.max_probe,
            trial,
        }
    }

    pub fn fast_config(&self, trial: u64) -> FastConfig {
        FastConfig {
            consts: self.consts(),
            lambda: self.selector.lambda,
            weights: FastWeights {
                zeta1: self.selector.zeta1,
                zeta2: self.selector.zeta2,
            },
            penbar_a: self.selector.penbar_a,
            penbar_b: self.selector.penbar_b,
            max_probe: self.selector.max_probe,
            trial,
        }
    }

    pub fn bandit_config(&self, trial: u64) -> BanditConfig {
        BanditConfig {
            consts: self.consts(),
            log_form: self.selector.log_form,
            bonus_scale: self.selector.bonus_scale,
            keep_snapshots: false,
            trial,
        }
    }

    /// The model classes described by `[hierarchy]`.
    pub fn classes(&self) -> Result<Vec<ModelClassSpec>> {
        let h = &self.hierarchy;
        let n = h.samples_per_quantum;
        let xbound = self.generator.xbound;
        let mut classes = match h.family {
            Family::Explicit => h.classes.clone(),
            Family::Dims => h
                .dims
                .iter()
                .enumerate()
                .map(|(p, &d)| {
                    let penalty = match h.penalty {
                        PenaltyFamily::Vc => PenaltySpec::Vc { dims: d },
                        PenaltyFamily::Rademacher => PenaltySpec::RademacherBall {
                            radius: h.radius,
                            xbound,
                        },
                        PenaltyFamily::Fast => PenaltySpec::Fast {
                            c: h.penalty_c,
                            dims: d,
                        },
                    };
                    let rate = match h.rate {
                        RateRule::PerDimension => n / d as f64,
                        RateRule::Constant => n,
                    };
                    ModelClassSpec::new(
                        p + 1,
                        Structure::ActiveDims {
                            dims: d,
                            radius: h.radius,
                        },
                        rate,
                        penalty,
                    )
                })
                .collect(),
            Family::Radii => {
                let d = self.generator.ambient_dim;
                h.radii
                    .iter()
                    .enumerate()
                    .map(|(p, &r)| {
                        let penalty = match h.penalty {
                            PenaltyFamily::Rademacher => PenaltySpec::RademacherBall { radius: r, xbound },
                            PenaltyFamily::Vc => PenaltySpec::Vc { dims: d },
                            PenaltyFamily::Fast => PenaltySpec::Fast { c: h.penalty_c, dims: d },
                        };
                        let rate = match h.rate {
                            RateRule::PerDimension => n / d as f64,
                            RateRule::Constant => n,
                        };
                        ModelClassSpec::new(p + 1, Structure::BallRadius { radius: r }, rate, penalty)
                    })
                    .collect()
            }
        };
        if !h.loss_offsets.is_empty() {
            if h.loss_offsets.len() != classes.len() {
                return Err(Error::Config(vec![format!(
                    "hierarchy.loss_offsets has {} entries for {} classes",
                    h.loss_offsets.len(),
                    classes.len()
                )]));
            }
            for (c, &o) in classes.iter_mut().zip(&h.loss_offsets) {
                c.loss_offset = o;
            }
        }
        Ok(classes)
    }

    /// Checks every section and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match self.classes() {
            Ok(classes) if classes.is_empty() => errs.push("hierarchy has no classes".to_string()),
            Ok(classes) => {
                for c in &classes {
                    if let Err(e) = c.validate().and_then(|_| c.penalty.validate()) {
                        errs.push(format!("hierarchy class {}: {e}", c.index));
                    }
                }
                if self.selector.kind != SelectorKind::Bandit {
                    if let Err(e) = validate_nested(&classes) {
                        errs.push(format!("hierarchy: {e}"));
                    }
                }
                if let Some(c) = classes.iter().find(|c| {
                    matches!(c.structure, Structure::ActiveDims { dims, .. } if dims > self.generator.ambient_dim)
                }) {
                    errs.push(format!(
                        "hierarchy class {} uses more dimensions than generator.ambient_dim",
                        c.index
                    ));
                }
            }
            Err(Error::Config(v)) => errs.extend(v),
            Err(e) => errs.push(e.to_string()),
        }
        if let Err(e) = self.generator.spec().validate() {
            errs.push(format!("generator: {e}"));
        }
        let s = &self.selector;
        if !(s.lambda.is_finite() && s.lambda > 0.0) {
            errs.push(format!("selector.lambda must be positive, got {}", s.lambda));
        }
        for (name, v) in [
            ("zeta1", s.zeta1),
            ("zeta2", s.zeta2),
            ("penbar_a", s.penbar_a),
            ("penbar_b", s.penbar_b),
            ("step_scale", s.step_scale),
            ("clip", s.clip),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("selector.{name} must be positive, got {v}"));
            }
        }
        if s.bonus_scale.is_some_and(|b| !(b.is_finite() && b >= 0.0)) {
            errs.push("selector.bonus_scale must be nonnegative".into());
        }
        if !s.loss.is_convex() {
            errs.push(format!("selector.loss {} cannot be trained by SGD", s.loss.name()));
        }
        if s.kind == SelectorKind::Fast && s.doubling {
            errs.push("selector.doubling applies only to the nested selector".into());
        }
        let b = &self.budget;
        for t in self.budgets() {
            if !(t.is_finite() && t >= 1.0) {
                errs.push(format!("budget {t} must be at least 1"));
            }
        }
        if let Some(sw) = b.sweep {
            if sw.k == 0 {
                errs.push("budget.sweep.k must be at least 1".into());
            }
        }
        if b.mc_samples == 0 {
            errs.push("budget.mc_samples must be positive".into());
        }
        if b.oracle_samples == 0 || b.oracle_mc == 0 {
            errs.push("budget.oracle_samples and budget.oracle_mc must be positive".into());
        }
        if b.max_violation_rate.is_some_and(|r| !(0.0..=1.0).contains(&r)) {
            errs.push("budget.max_violation_rate must lie in [0, 1]".into());
        }
        if let Err(e) = self.consts().validate() {
            errs.push(format!("constants: {e}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}
