#![allow(dead_code)]

use budsel::datagen::{DataGenKind, DataGenSpec};
use budsel::learners::{SgdLearner, StepSchedule};
use budsel::penalties::PenaltySpec;
use budsel::{LossKind, ModelClassSpec, Structure};

/// Increasing-dimension hierarchy with VC penalties and `n_i = n / d_i`.
pub fn vc_dims(dims: &[usize], radius: f64, n: f64) -> Vec<ModelClassSpec> {
    dims.iter()
        .enumerate()
        .map(|(p, &d)| {
            ModelClassSpec::new(
                p + 1,
                Structure::ActiveDims { dims: d, radius },
                n / d as f64,
                PenaltySpec::Vc { dims: d },
            )
        })
        .collect()
}

/// Same shape with the `c d log(n/d) / n` penalty.
pub fn fast_dims(dims: &[usize], radius: f64, n: f64, c: f64) -> Vec<ModelClassSpec> {
    dims.iter()
        .enumerate()
        .map(|(p, &d)| {
            ModelClassSpec::new(
                p + 1,
                Structure::ActiveDims { dims: d, radius },
                n / d as f64,
                PenaltySpec::Fast { c, dims: d },
            )
        })
        .collect()
}

/// Sphere covariates with unit-variance coordinates, sign labels.
pub fn sign_data(ambient: usize, support: usize, norm: f64, flip: f64, seed: u64) -> DataGenSpec {
    DataGenSpec {
        kind: DataGenKind::NestedDims,
        ambient_dim: ambient,
        true_support: support,
        weight_norm: norm,
        label_noise: flip,
        xbound: (ambient as f64).sqrt(),
        margin: 0.0,
        noise: 0.0,
        seed,
    }
}

/// Uniform covariates with unit-variance coordinates, linear response.
pub fn regression_data(ambient: usize, support: usize, norm: f64, noise: f64, seed: u64) -> DataGenSpec {
    DataGenSpec {
        kind: DataGenKind::FastRateRegression,
        ambient_dim: ambient,
        true_support: support,
        weight_norm: norm,
        label_noise: 0.0,
        xbound: (ambient as f64).sqrt(),
        margin: 0.0,
        noise,
        seed,
    }
}

pub fn sgd(loss: LossKind, spec: &DataGenSpec) -> SgdLearner {
    SgdLearner::new(
        loss,
        StepSchedule {
            xbound: spec.xbound,
            ..StepSchedule::default()
        },
    )
}
