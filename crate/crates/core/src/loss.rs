//! Pointwise losses on a real-valued prediction.
//!
//! Classification losses take labels in `{-1, +1}` and act on the margin
//! `y * p`; the squared loss treats `y` as a real response.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Hinge,
    Logistic,
    Squared,
    Exponential,
    ZeroOne,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
            LossKind::Squared => "squared",
            LossKind::Exponential => "exponential",
            LossKind::ZeroOne => "zero_one",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "hinge" => Some(LossKind::Hinge),
            "logistic" => Some(LossKind::Logistic),
            "squared" => Some(LossKind::Squared),
            "exponential" => Some(LossKind::Exponential),
            "zero_one" => Some(LossKind::ZeroOne),
            _ => None,
        }
    }

    /// Loss of prediction `p` against target `y`.
    #[inline]
    pub fn eval(self, y: f64, p: f64) -> f64 {
        match self {
            LossKind::Hinge => (1.0 - y * p).max(0.0),
            LossKind::Logistic => softplus(-y * p),
            LossKind::Squared => {
                let r = y - p;
                r * r
            }
            LossKind::Exponential => (-y * p).exp(),
            LossKind::ZeroOne => {
                if y * p <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// A (sub)derivative of the loss with respect to the prediction.
    #[inline]
    pub fn derivative(self, y: f64, p: f64) -> f64 {
        match self {
            LossKind::Hinge => {
                if y * p < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossKind::Logistic => -y * sigmoid(-y * p),
            LossKind::Squared => 2.0 * (p - y),
            LossKind::Exponential => -y * (-y * p).exp(),
            LossKind::ZeroOne => 0.0,
        }
    }

    /// Lipschitz constant in the prediction, when one exists globally.
    pub fn lipschitz(self) -> Option<f64> {
        match self {
            LossKind::Hinge | LossKind::Logistic => Some(1.0),
            _ => None,
        }
    }

    pub fn is_convex(self) -> bool {
        !matches!(self, LossKind::ZeroOne)
    }

    /// Upper bound on the loss of the zero predictor for classification losses.
    /// The squared loss depends on the response scale and returns `None`.
    pub fn loss_at_zero(self) -> Option<f64> {
        match self {
            LossKind::Hinge | LossKind::ZeroOne | LossKind::Exponential => Some(1.0),
            LossKind::Logistic => Some(std::f64::consts::LN_2),
            LossKind::Squared => None,
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
