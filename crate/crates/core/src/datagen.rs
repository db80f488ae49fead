//! Seeded synthetic distributions with known structure.
//!
//! Every draw comes from a ChaCha stream keyed by the master seed of the
//! [`DataGenSpec`] and a [`StreamId`] naming the (phase, class, trial) that
//! consumes it. Stream identifiers map injectively onto ChaCha stream
//! numbers, so two consumers never share draws.

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{erm_oracle, OracleOptions};
use crate::loss::LossKind;
use crate::risk::{LossAccumulator, RiskEstimate};
use crate::types::{LinearModel, ModelClassSpec, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataGenKind {
    /// Sphere covariates, labels from the sign of a sparse linear rule,
    /// points closer than `margin` to the decision boundary rejected.
    NestedBallMargin,
    /// Sphere covariates, labels from the sign of a linear rule supported on
    /// the first `true_support` coordinates.
    NestedDims,
    /// Uniform covariates, `y = <theta*, x> + U[-noise, noise]`.
    FastRateRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenSpec {
    pub kind: DataGenKind,
    pub ambient_dim: usize,
    pub true_support: usize,
    /// `|theta*|_2`.
    pub weight_norm: f64,
    /// Label flip probability for the classification kinds.
    #[serde(default)]
    pub label_noise: f64,
    /// `X̄`: covariates satisfy `E|x|^2 = X̄^2`.
    pub xbound: f64,
    /// Rejection band half-width for `nested_ball_margin`.
    #[serde(default)]
    pub margin: f64,
    /// Half-width of the uniform response noise for regression.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
}

impl DataGenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDistribution(m));
        if self.ambient_dim == 0 {
            return bad("ambient dimension must be positive".into());
        }
        if self.true_support == 0 || self.true_support > self.ambient_dim {
            return bad(format!(
                "true support {} must lie in 1..={}",
                self.true_support, self.ambient_dim
            ));
        }
        if !(self.weight_norm.is_finite() && self.weight_norm > 0.0) {
            return bad("weight norm must be positive".into());
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad(format!("label noise {} outside [0, 1/2)", self.label_noise));
        }
        if !(self.xbound.is_finite() && self.xbound > 0.0) {
            return bad("xbound must be positive".into());
        }
        if !(self.margin.is_finite() && self.margin >= 0.0 && self.margin < 0.5 * self.xbound) {
            return bad(format!("margin {} must lie in [0, xbound/2)", self.margin));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise must be finite and nonnegative".into());
        }
        Ok(())
    }

    /// `theta*`: equal weights on the first `true_support` coordinates.
    pub fn true_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.ambient_dim];
        let v = self.weight_norm / (self.true_support as f64).sqrt();
        w[..self.true_support].iter_mut().for_each(|c| *c = v);
        w
    }

    pub fn is_regression(&self) -> bool {
        self.kind == DataGenKind::FastRateRegression
    }

    /// Bayes risk where it is known in closed form.
    pub fn bayes_risk(&self, loss: LossKind) -> Option<f64> {
        match (self.kind, loss) {
            (DataGenKind::FastRateRegression, LossKind::Squared) => Some(self.noise * self.noise / 3.0),
            (DataGenKind::NestedDims | DataGenKind::NestedBallMargin, LossKind::ZeroOne) => {
                Some(self.label_noise)
            }
            _ => None,
        }
    }

    /// `R(0)`, an a-priori upper bound on the best risk of any class
    /// containing the zero predictor.
    pub fn risk_of_zero(&self, loss: LossKind) -> f64 {
        match loss.loss_at_zero() {
            Some(v) => v,
            None => {
                // E y^2 = E <theta*, x>^2 + noise^2 / 3 with E x x^T = (X̄^2 / d) I
                let signal = self.weight_norm * self.weight_norm * self.xbound * self.xbound
                    / self.ambient_dim as f64;
                signal + self.noise * self.noise / 3.0
            }
        }
    }
}

/// Who consumes a stream of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Generic = 0,
    Train = 1,
    Evaluation = 2,
    Oracle = 3,
    Holdout = 4,
    Bandit = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamId {
    pub phase: Phase,
    pub class: u32,
    pub trial: u64,
}

const CLASS_BITS: u32 = 20;
const TRIAL_BITS: u32 = 40;

impl StreamId {
    pub const MAX_CLASS: u32 = (1 << CLASS_BITS) - 1;
    pub const MAX_TRIAL: u64 = (1 << TRIAL_BITS) - 1;

    pub fn new(phase: Phase, class: usize, trial: u64) -> Self {
        assert!(class as u64 <= Self::MAX_CLASS as u64, "class {class} out of stream range");
        assert!(trial <= Self::MAX_TRIAL, "trial {trial} out of stream range");
        Self {
            phase,
            class: class as u32,
            trial,
        }
    }

    /// Injective packing into a ChaCha stream number.
    pub fn code(&self) -> u64 {
        ((self.phase as u64) << (CLASS_BITS + TRIAL_BITS))
            | ((self.class as u64) << TRIAL_BITS)
            | self.trial
    }
}

/// Infinite iterator of i.i.d. samples for one stream.
#[derive(Debug, Clone)]
pub struct SampleStream {
    spec: DataGenSpec,
    theta: Vec<f64>,
    unit: Vec<f64>,
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn open(spec: &DataGenSpec, id: StreamId) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(id.code());
        let theta = spec.true_weights();
        let norm = spec.weight_norm;
        let unit = theta.iter().map(|t| t / norm).collect();
        Ok(Self {
            spec: spec.clone(),
            theta,
            unit,
            rng,
        })
    }

    fn sphere(&mut self) -> Vec<f64> {
        let d = self.spec.ambient_dim;
        loop {
            let g: Vec<f64> = (0..d).map(|_| self.rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                let scale = self.spec.xbound / norm;
                return g.into_iter().map(|v| v * scale).collect();
            }
        }
    }

    fn flip(&mut self, label: f64) -> f64 {
        if self.spec.label_noise > 0.0 && self.rng.gen::<f64>() < self.spec.label_noise {
            -label
        } else {
            label
        }
    }

    fn draw(&mut self) -> Sample {
        match self.spec.kind {
            DataGenKind::NestedDims => {
                let x = self.sphere();
                let y = sign(dot(&self.theta, &x));
                let y = self.flip(y);
                Sample { x, y }
            }
            DataGenKind::NestedBallMargin => {
                let x = loop {
                    let x = self.sphere();
                    if dot(&self.unit, &x).abs() >= self.spec.margin {
                        break x;
                    }
                };
                let y = sign(dot(&self.theta, &x));
                let y = self.flip(y);
                Sample { x, y }
            }
            DataGenKind::FastRateRegression => {
                let d = self.spec.ambient_dim as f64;
                let a = self.spec.xbound * (3.0 / d).sqrt();
                let x: Vec<f64> = (0..self.spec.ambient_dim)
                    .map(|_| self.rng.gen_range(-a..=a))
                    .collect();
                let eps = if self.spec.noise > 0.0 {
                    self.rng.gen_range(-self.spec.noise..=self.spec.noise)
                } else {
                    0.0
                };
                let y = dot(&self.theta, &x) + eps;
                Sample { x, y }
            }
        }
    }

    pub fn take_vec(&mut self, n: usize) -> Vec<Sample> {
        (0..n).map(|_| self.draw()).collect()
    }
}

impl Iterator for SampleStream {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        Some(self.draw())
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::types::dot(a, b)
}

/// `n` i.i.d. samples from the generic stream of `spec`.
pub fn generate(spec: &DataGenSpec, n: usize) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    Ok(SampleStream::open(spec, StreamId::new(Phase::Generic, 0, 0))?.take_vec(n))
}

/// A source of independent sample streams consumed by the selectors.
pub trait DataSource: Sync {
    fn dim(&self) -> usize;
    fn open(&self, id: StreamId) -> Result<Box<dyn Iterator<Item = Sample> + Send>>;

    fn draw(&self, id: StreamId, n: usize) -> Result<Vec<Sample>> {
        Ok(self.open(id)?.take(n).collect())
    }
}

impl DataSource for DataGenSpec {
    fn dim(&self) -> usize {
        self.ambient_dim
    }

    fn open(&self, id: StreamId) -> Result<Box<dyn Iterator<Item = Sample> + Send>> {
        Ok(Box::new(SampleStream::open(self, id)?))
    }
}

/// Monte Carlo estimate of the population risk of `model` on `n_mc` fresh
/// draws. The same `(spec, seed)` always uses the same draws.
pub fn population_risk_mc(
    model: &LinearModel,
    spec: &DataGenSpec,
    loss: LossKind,
    n_mc: u64,
    seed: u64,
) -> Result<RiskEstimate> {
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be at least 1".into()));
    }
    if model.dim() != spec.ambient_dim {
        return Err(Error::DimensionMismatch {
            model: model.dim(),
            sample: spec.ambient_dim,
        });
    }
    let mut stream = SampleStream::open(spec, StreamId::new(Phase::Evaluation, 0, seed))?;
    let mut acc = LossAccumulator::default();
    for _ in 0..n_mc {
        let s = stream.draw();
        acc.push(loss.eval(s.y, model.predict(&s.x)));
    }
    acc.finish()
}

/// Reference value `R_i*` for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRisk {
    pub index: usize,
    pub risk: f64,
    pub std_error: f64,
    pub model: LinearModel,
}

pub const MIN_ORACLE_SAMPLES: usize = 100_000;
pub const DEFAULT_ORACLE_MC: u64 = 1_000_000;

/// Per-class best-in-class risk estimates: high-accuracy ERM on `n_oracle`
/// samples, then Monte Carlo evaluation on `n_mc` fresh draws. Class loss
/// offsets are included.
pub fn oracle_class_risks(
    spec: &DataGenSpec,
    hierarchy: &[ModelClassSpec],
    loss: LossKind,
    n_oracle: usize,
    n_mc: u64,
) -> Result<Vec<ClassRisk>> {
    if n_oracle < MIN_ORACLE_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {n_oracle}"
        )));
    }
    oracle_class_risks_unchecked(spec, hierarchy, loss, n_oracle, n_mc)
}

/// [`oracle_class_risks`] without the sample-size floor, for small studies.
pub fn oracle_class_risks_unchecked(
    spec: &DataGenSpec,
    hierarchy: &[ModelClassSpec],
    loss: LossKind,
    n_oracle: usize,
    n_mc: u64,
) -> Result<Vec<ClassRisk>> {
    let train = SampleStream::open(spec, StreamId::new(Phase::Oracle, 0, 0))?.take_vec(n_oracle);
    let opts = OracleOptions::default();
    hierarchy
        .iter()
        .map(|class| {
            let sol = erm_oracle(class, spec.ambient_dim, &train, loss, &opts)?;
            let est = population_risk_mc(&sol.model, spec, loss, n_mc, 0)?;
            Ok(ClassRisk {
                index: class.index,
                risk: est.value + class.loss_offset,
                std_error: est.std_error,
                model: sol.model,
            })
        })
        .collect()
}

/// Writes samples as whitespace-separated text: a header `# dim=<d> n=<n>`,
/// then one `y x_1 ... x_d` line per sample.
pub fn write_dataset<W: Write>(mut w: W, samples: &[Sample]) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.x.len());
    writeln!(w, "# dim={dim} n={}", samples.len())?;
    for s in samples {
        write!(w, "{:e}", s.y)?;
        for v in &s.x {
            write!(w, " {v:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Vec<Sample>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty dataset".into()))??;
    let mut dim = None;
    for tok in header.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("dim=") {
            dim = v.parse::<usize>().ok();
        }
    }
    let dim = dim.ok_or_else(|| Error::InvalidArgument(format!("bad header: {header}")))?;
    let mut out = Vec::new();
    for (no, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| Error::InvalidArgument(format!("line {}: {e}", no + 2)))?;
        if vals.len() != dim + 1 {
            return Err(Error::InvalidArgument(format!(
                "line {}: expected {} values, got {}",
                no + 2,
                dim + 1,
                vals.len()
            )));
        }
        out.push(Sample {
            y: vals[0],
            x: vals[1..].to_vec(),
        });
    }
    Ok(out)
}
