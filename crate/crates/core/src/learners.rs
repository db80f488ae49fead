//! Budget-metered learners over linear classes.
//!
//! [`sgd_train`] is the production learner: one projected stochastic
//! gradient step per sample, so the work done is proportional to
//! `active_dims * samples`. [`erm_oracle`] is an unmetered high-accuracy
//! minimizer used as a reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::risk::check_dim;
use crate::types::{LinearModel, ModelClassSpec, Sample};

/// Step-size parameters: `eta_t = scale * r / (G sqrt(t))`, where `G` is
/// `lipschitz * xbound` for Lipschitz losses and `clip` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSchedule {
    pub xbound: f64,
    /// Gradient norm clip for losses without a global Lipschitz constant.
    pub clip: f64,
    pub scale: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            xbound: 1.0,
            clip: 10.0,
            scale: 1.0,
        }
    }
}

impl StepSchedule {
    pub fn gradient_bound(&self, loss: LossKind) -> f64 {
        match loss.lipschitz() {
            Some(l) => l * self.xbound,
            None => self.clip,
        }
    }
}

/// Learner state carried between warm-started calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    /// Averaged iterate: the model handed back to callers.
    pub model: LinearModel,
    /// Last raw iterate.
    pub iterate: Vec<f64>,
    /// Total SGD steps taken, equal to samples consumed.
    pub steps: u64,
    /// A-priori bound `3 r G / sqrt(steps)` on the expected suboptimality
    /// of the averaged iterate.
    pub gap_estimate: f64,
}

impl SgdState {
    pub fn zero(dim: usize) -> Self {
        Self {
            model: LinearModel::zeros(dim),
            iterate: vec![0.0; dim],
            steps: 0,
            gap_estimate: 0.0,
        }
    }
}

/// Euclidean projection onto `{theta : theta_j = 0 for j >= active, |theta| <= r}`.
pub fn project(theta: &mut [f64], active: usize, radius: f64) {
    for v in theta.iter_mut().skip(active) {
        *v = 0.0;
    }
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        let s = if norm > 0.0 { radius / norm } else { 0.0 };
        theta.iter_mut().for_each(|v| *v *= s);
    }
}

/// Projected SGD with iterate averaging over one pass of `samples`,
/// continuing from `init` when given.
pub fn sgd_train(
    class: &ModelClassSpec,
    dim: usize,
    samples: &[Sample],
    loss: LossKind,
    init: Option<&SgdState>,
    schedule: &StepSchedule,
) -> Result<SgdState> {
    if !loss.is_convex() {
        return Err(Error::NonConvexLoss(loss.name()));
    }
    let mut state = match init {
        Some(s) => {
            if s.iterate.len() != dim {
                return Err(Error::DimensionMismatch {
                    model: s.iterate.len(),
                    sample: dim,
                });
            }
            s.clone()
        }
        None => SgdState::zero(dim),
    };
    if samples.is_empty() {
        return Ok(state);
    }
    let active = class.structure.active_dims(dim);
    let radius = class.radius();
    let g_bound = schedule.gradient_bound(loss);
    if !(g_bound.is_finite() && g_bound > 0.0) {
        return Err(Error::InvalidArgument(format!("gradient bound {g_bound}")));
    }
    let base = schedule.scale * radius / g_bound;
    let clip = loss.lipschitz().is_none();

    let theta = &mut state.iterate;
    let avg = &mut state.model.weights;
    for s in samples {
        if s.x.len() != dim {
            return Err(Error::DimensionMismatch {
                model: dim,
                sample: s.x.len(),
            });
        }
        state.steps += 1;
        let t = state.steps as f64;
        let p: f64 = theta[..active].iter().zip(&s.x).map(|(a, b)| a * b).sum();
        let mut g = loss.derivative(s.y, p);
        if clip {
            let xn = s.x[..active].iter().map(|v| v * v).sum::<f64>().sqrt();
            let gn = g.abs() * xn;
            if gn > schedule.clip {
                g *= schedule.clip / gn;
            }
        }
        let eta = base / t.sqrt();
        for (w, x) in theta[..active].iter_mut().zip(&s.x) {
            *w -= eta * g * x;
        }
        project(theta, active, radius);
        let inv = 1.0 / t;
        for (a, w) in avg.iter_mut().zip(theta.iter()) {
            *a += (w - *a) * inv;
        }
    }
    state.gap_estimate = 3.0 * radius * g_bound / (state.steps as f64).sqrt();
    Ok(state)
}

/// A learner that can be trained from scratch or continued on fresh data.
pub trait Learner: Sync {
    fn loss(&self) -> LossKind;

    fn fit(
        &self,
        class: &ModelClassSpec,
        dim: usize,
        samples: &[Sample],
        warm: Option<&SgdState>,
    ) -> Result<SgdState>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdLearner {
    pub loss: LossKind,
    pub schedule: StepSchedule,
}

impl SgdLearner {
    pub fn new(loss: LossKind, schedule: StepSchedule) -> Self {
        Self { loss, schedule }
    }
}

impl Learner for SgdLearner {
    fn loss(&self) -> LossKind {
        self.loss
    }

    fn fit(
        &self,
        class: &ModelClassSpec,
        dim: usize,
        samples: &[Sample],
        warm: Option<&SgdState>,
    ) -> Result<SgdState> {
        sgd_train(class, dim, samples, self.loss, warm, &self.schedule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    /// Stop once the relative objective change stays below this.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Final smoothing width for the hinge loss.
    pub hinge_smoothing: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            max_iter: 20_000,
            hinge_smoothing: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmSolution {
    pub model: LinearModel,
    /// Empirical risk (true loss, not smoothed) of `model`.
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy)]
enum Surrogate {
    Plain(LossKind),
    SmoothHinge(f64),
}

impl Surrogate {
    #[inline]
    fn value_and_slope(self, y: f64, p: f64) -> (f64, f64) {
        match self {
            Surrogate::Plain(l) => (l.eval(y, p), l.derivative(y, p)),
            Surrogate::SmoothHinge(mu) => {
                let m = y * p;
                if m >= 1.0 {
                    (0.0, 0.0)
                } else if m <= 1.0 - mu {
                    (1.0 - m - 0.5 * mu, -y)
                } else {
                    let u = 1.0 - m;
                    (u * u / (2.0 * mu), -y * u / mu)
                }
            }
        }
    }
}

fn objective_and_grad(
    theta: &[f64],
    active: usize,
    samples: &[Sample],
    sur: Surrogate,
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = samples.len() as f64;
    let mut total = 0.0;
    match grad {
        Some(g) => {
            g.iter_mut().for_each(|v| *v = 0.0);
            for s in samples {
                let p: f64 = theta[..active].iter().zip(&s.x).map(|(a, b)| a * b).sum();
                let (v, d) = sur.value_and_slope(s.y, p);
                total += v;
                if d != 0.0 {
                    for (gj, xj) in g[..active].iter_mut().zip(&s.x) {
                        *gj += d * xj;
                    }
                }
            }
            g.iter_mut().for_each(|v| *v /= n);
        }
        None => {
            for s in samples {
                let p: f64 = theta[..active].iter().zip(&s.x).map(|(a, b)| a * b).sum();
                total += sur.value_and_slope(s.y, p).0;
            }
        }
    }
    total / n
}

/// Monotone accelerated projected gradient with backtracking and restarts.
fn fista(
    start: &[f64],
    active: usize,
    radius: f64,
    samples: &[Sample],
    sur: Surrogate,
    opts: &OracleOptions,
) -> (Vec<f64>, f64, usize, bool) {
    let dim = start.len();
    let mut x = start.to_vec();
    project(&mut x, active, radius);
    let mut fx = objective_and_grad(&x, active, samples, sur, None);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0f64;
    let mut grad = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut calm = 0;

    for it in 1..=opts.max_iter {
        let fy = objective_and_grad(&y, active, samples, sur, Some(&mut grad));
        let fz = loop {
            for j in 0..dim {
                z[j] = y[j] - grad[j] / lip;
            }
            project(&mut z, active, radius);
            let fz = objective_and_grad(&z, active, samples, sur, None);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..dim {
                let d = z[j] - y[j];
                lin += grad[j] * d;
                sq += d * d;
            }
            if fz <= fy + lin + 0.5 * lip * sq + 1e-15 * fy.abs() || lip > 1e15 {
                break fz;
            }
            lip *= 2.0;
        };
        let mapping: f64 = y
            .iter()
            .zip(&z)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            * lip;

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let prev_f = fx;
        if fz <= fx {
            let x_old = std::mem::replace(&mut x, z.clone());
            fx = fz;
            for j in 0..dim {
                y[j] = x[j] + ((t - 1.0) / t_next) * (x[j] - x_old[j]);
            }
            t = t_next;
        } else {
            // restart momentum from the best point
            y.copy_from_slice(&x);
            t = 1.0;
        }
        lip *= 0.9;

        let rel = (prev_f - fx).abs() / fx.abs().max(1e-12);
        if rel < opts.rel_tol {
            calm += 1;
        } else {
            calm = 0;
        }
        if mapping < 1e-10 || (calm >= 5 && mapping < 1e-6) || fx == 0.0 {
            return (x, fx, it, true);
        }
    }
    (x, fx, opts.max_iter, false)
}

/// High-accuracy empirical risk minimizer over the class, for reference
/// comparisons only.
pub fn erm_oracle(
    class: &ModelClassSpec,
    dim: usize,
    samples: &[Sample],
    loss: LossKind,
    opts: &OracleOptions,
) -> Result<ErmSolution> {
    if !loss.is_convex() {
        return Err(Error::NonConvexLoss(loss.name()));
    }
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let probe = LinearModel::zeros(dim);
    for s in samples {
        check_dim(&probe, s)?;
    }
    let active = class.structure.active_dims(dim);
    let radius = class.radius();

    let (theta, iterations, converged) = match loss {
        LossKind::Hinge => {
            let mut theta = vec![0.0; dim];
            let mut total = 0;
            let mut mu = 1.0;
            let ok;
            loop {
                let (th, _, it, conv) =
                    fista(&theta, active, radius, samples, Surrogate::SmoothHinge(mu), opts);
                theta = th;
                total += it;
                if mu <= opts.hinge_smoothing {
                    ok = conv;
                    break;
                }
                mu = (mu * 0.1).max(opts.hinge_smoothing);
            }
            (theta, total, ok)
        }
        _ => {
            let (th, _, it, conv) =
                fista(&vec![0.0; dim], active, radius, samples, Surrogate::Plain(loss), opts);
            (th, it, conv)
        }
    };
    let objective = objective_and_grad(&theta, active, samples, Surrogate::Plain(loss), None);
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            objective,
            best: theta,
        });
    }
    Ok(ErmSolution {
        model: LinearModel::new(theta),
        objective,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalties::PenaltySpec;
    use crate::risk::mean_loss;
    use crate::types::Structure;

    fn ball(r: f64) -> ModelClassSpec {
        ModelClassSpec::new(
            1,
            Structure::BallRadius { radius: r },
            1.0,
            PenaltySpec::RademacherBall {
                radius: r,
                xbound: 1.0,
            },
        )
    }

    #[test]
    fn no_samples_returns_zero_model() {
        let st = sgd_train(&ball(1.0), 3, &[], LossKind::Hinge, None, &StepSchedule::default()).unwrap();
        assert_eq!(st.model.weights, vec![0.0; 3]);
        assert_eq!(st.gap_estimate, 0.0);
        assert_eq!(st.steps, 0);
    }

    #[test]
    fn nonconvex_loss_rejected() {
        let r = sgd_train(&ball(1.0), 1, &[], LossKind::ZeroOne, None, &StepSchedule::default());
        assert_eq!(r, Err(Error::NonConvexLoss("zero_one")));
    }

    #[test]
    fn hinge_one_dimensional_reaches_ball_boundary() {
        let data = vec![Sample::new(vec![1.0], 1.0); 10_000];
        let st = sgd_train(&ball(1.0), 1, &data, LossKind::Hinge, None, &StepSchedule::default()).unwrap();
        assert!(st.model.weights[0] >= 0.9, "{:?}", st.model.weights);
        assert!(st.model.weights[0] <= 1.0 + 1e-12);
    }

    #[test]
    fn warm_start_equals_single_pass() {
        let data: Vec<Sample> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.37;
                Sample::new(vec![a.sin(), a.cos()], if i % 3 == 0 { -1.0 } else { 1.0 })
            })
            .collect();
        let c = ball(2.0);
        let sch = StepSchedule::default();
        let full = sgd_train(&c, 2, &data, LossKind::Logistic, None, &sch).unwrap();
        let half = sgd_train(&c, 2, &data[..15], LossKind::Logistic, None, &sch).unwrap();
        let rest = sgd_train(&c, 2, &data[15..], LossKind::Logistic, Some(&half), &sch).unwrap();
        assert_eq!(full, rest);
        assert_eq!(rest.steps, 40);
    }

    #[test]
    fn projection_zeroes_inactive_coordinates() {
        let c = ModelClassSpec::new(
            1,
            Structure::ActiveDims { dims: 1, radius: 0.5 },
            1.0,
            PenaltySpec::Vc { dims: 1 },
        );
        let data: Vec<Sample> = (0..200)
            .map(|i| Sample::new(vec![1.0, (i as f64).cos()], 1.0))
            .collect();
        let st = sgd_train(&c, 2, &data, LossKind::Hinge, None, &StepSchedule::default()).unwrap();
        assert_eq!(st.model.weights[1], 0.0);
        assert!(st.model.norm() <= 0.5 + 1e-9);
    }

    #[test]
    fn oracle_single_hinge_sample_attains_zero() {
        let data = vec![Sample::new(vec![0.6, -0.8], 1.0)];
        let sol = erm_oracle(&ball(100.0), 2, &data, LossKind::Hinge, &OracleOptions::default()).unwrap();
        assert!(sol.objective <= 1e-12, "{}", sol.objective);
    }

    #[test]
    fn oracle_squared_matches_normal_equations() {
        // y = 2 x1 - x2 exactly; unconstrained minimizer recovers it
        let data: Vec<Sample> = (0..50)
            .map(|i| {
                let a = (i as f64 * 0.71).sin();
                let b = (i as f64 * 1.3).cos();
                Sample::new(vec![a, b], 2.0 * a - b)
            })
            .collect();
        let sol = erm_oracle(&ball(10.0), 2, &data, LossKind::Squared, &OracleOptions::default()).unwrap();
        assert!((sol.model.weights[0] - 2.0).abs() < 1e-5, "{:?}", sol.model);
        assert!((sol.model.weights[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn oracle_is_deterministic_and_beats_sgd() {
        let data: Vec<Sample> = (0..300)
            .map(|i| {
                let a = i as f64 * 0.91;
                let x = vec![a.sin(), (2.0 * a).cos(), (0.3 * a).sin()];
                let y = if x[0] + 0.5 * x[1] > 0.1 { 1.0 } else { -1.0 };
                Sample::new(x, y)
            })
            .collect();
        let c = ball(1.5);
        let o = OracleOptions::default();
        let a = erm_oracle(&c, 3, &data, LossKind::Logistic, &o).unwrap();
        let b = erm_oracle(&c, 3, &data, LossKind::Logistic, &o).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-12);
        let sgd = sgd_train(&c, 3, &data, LossKind::Logistic, None, &StepSchedule::default()).unwrap();
        let sgd_obj = mean_loss(&sgd.model, &data, LossKind::Logistic).unwrap();
        assert!(a.objective <= sgd_obj + 1e-12);
        assert!(a.model.norm() <= 1.5 + 1e-9);
    }
}
