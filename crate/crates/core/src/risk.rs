//! Empirical risk evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::types::{LinearModel, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub n_samples: u64,
    #[serde(default)]
    pub class_index: Option<usize>,
    /// Sample standard deviation of the loss divided by `sqrt(n)`.
    pub std_error: f64,
}

impl RiskEstimate {
    pub fn for_class(mut self, index: usize) -> Self {
        self.class_index = Some(index);
        self
    }
}

/// Streaming mean and variance of loss values (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct LossAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl LossAccumulator {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(&self) -> Result<RiskEstimate> {
        if self.n == 0 {
            return Err(Error::NoSamples);
        }
        let var = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        Ok(RiskEstimate {
            value: self.mean,
            n_samples: self.n,
            class_index: None,
            std_error: (var / self.n as f64).sqrt(),
        })
    }
}

pub(crate) fn check_dim(model: &LinearModel, sample: &Sample) -> Result<()> {
    if model.dim() != sample.x.len() {
        Err(Error::DimensionMismatch {
            model: model.dim(),
            sample: sample.x.len(),
        })
    } else {
        Ok(())
    }
}

/// Plain sum of losses; the building block of every risk computation.
pub fn loss_sum(model: &LinearModel, samples: &[Sample], loss: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        check_dim(model, s)?;
        total += loss.eval(s.y, model.predict(&s.x));
    }
    Ok(total)
}

/// `(1/n) sum_i loss(y_i, <w, x_i>)`.
pub fn empirical_risk(model: &LinearModel, samples: &[Sample], loss: LossKind) -> Result<RiskEstimate> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let total = loss_sum(model, samples, loss)?;
    let n = samples.len() as f64;
    let mean = total / n;
    let var = if samples.len() > 1 {
        samples
            .iter()
            .map(|s| {
                let d = loss.eval(s.y, model.predict(&s.x)) - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    Ok(RiskEstimate {
        value: mean,
        n_samples: samples.len() as u64,
        class_index: None,
        std_error: (var / n).sqrt(),
    })
}

/// Mean loss only, skipping the variance pass.
pub fn mean_loss(model: &LinearModel, samples: &[Sample], loss: LossKind) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(loss_sum(model, samples, loss)? / samples.len() as f64)
}

/// Running empirical risk over a growing sample set.
///
/// The squared loss keeps second-moment sufficient statistics so the risk of
/// any linear model is available in `O(d^2)`; other losses keep the samples.
#[derive(Debug, Clone)]
pub enum RiskAccumulator {
    Squared {
        dim: usize,
        n: u64,
        /// Row-major `sum x x^T`.
        sxx: Vec<f64>,
        sxy: Vec<f64>,
        syy: f64,
    },
    Stored {
        loss: LossKind,
        samples: Vec<Sample>,
    },
}

impl RiskAccumulator {
    pub fn new(loss: LossKind, dim: usize) -> Self {
        match loss {
            LossKind::Squared => RiskAccumulator::Squared {
                dim,
                n: 0,
                sxx: vec![0.0; dim * dim],
                sxy: vec![0.0; dim],
                syy: 0.0,
            },
            _ => RiskAccumulator::Stored {
                loss,
                samples: Vec::new(),
            },
        }
    }

    pub fn len(&self) -> u64 {
        match self {
            RiskAccumulator::Squared { n, .. } => *n,
            RiskAccumulator::Stored { samples, .. } => samples.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extend(&mut self, batch: &[Sample]) -> Result<()> {
        match self {
            RiskAccumulator::Squared {
                dim,
                n,
                sxx,
                sxy,
                syy,
            } => {
                for s in batch {
                    if s.x.len() != *dim {
                        return Err(Error::DimensionMismatch {
                            model: *dim,
                            sample: s.x.len(),
                        });
                    }
                    for a in 0..*dim {
                        let xa = s.x[a];
                        if xa == 0.0 {
                            continue;
                        }
                        let row = &mut sxx[a * *dim..(a + 1) * *dim];
                        for (r, xb) in row.iter_mut().zip(&s.x) {
                            *r += xa * xb;
                        }
                        sxy[a] += xa * s.y;
                    }
                    *syy += s.y * s.y;
                    *n += 1;
                }
                Ok(())
            }
            RiskAccumulator::Stored { samples, .. } => {
                samples.extend_from_slice(batch);
                Ok(())
            }
        }
    }

    /// Empirical risk of `model` over every sample pushed so far.
    pub fn risk(&self, model: &LinearModel) -> Result<f64> {
        match self {
            RiskAccumulator::Squared {
                dim,
                n,
                sxx,
                sxy,
                syy,
            } => {
                if *n == 0 {
                    return Err(Error::NoSamples);
                }
                if model.dim() != *dim {
                    return Err(Error::DimensionMismatch {
                        model: model.dim(),
                        sample: *dim,
                    });
                }
                let w = &model.weights;
                let mut quad = 0.0;
                for a in 0..*dim {
                    if w[a] == 0.0 {
                        continue;
                    }
                    let row = &sxx[a * *dim..(a + 1) * *dim];
                    quad += w[a] * row.iter().zip(w).map(|(r, wb)| r * wb).sum::<f64>();
                }
                let lin: f64 = w.iter().zip(sxy).map(|(a, b)| a * b).sum();
                // rounding can push a perfect fit slightly negative
                Ok(((syy - 2.0 * lin + quad) / *n as f64).max(0.0))
            }
            RiskAccumulator::Stored { loss, samples } => mean_loss(model, samples, *loss),
        }
    }
}
