use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Network;
use crate::oco::{Evaluation, LossOracle};
use crate::tensor::Tensor;

/// Convex losses of the network output against a target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLoss {
    /// `½ ‖f − y‖²`
    #[default]
    Square,
    /// `Σ_i |f_i − y_i|`; each partial derivative is bounded by 1.
    Abs,
    /// `‖f − y‖₂`
    L2,
}

impl OutputLoss {
    pub fn value(self, f: &[f64], y: &[f64]) -> f64 {
        let diff = f.iter().zip(y).map(|(a, b)| a - b);
        match self {
            OutputLoss::Square => 0.5 * diff.map(|d| d * d).sum::<f64>(),
            OutputLoss::Abs => diff.map(f64::abs).sum(),
            OutputLoss::L2 => diff.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }

    /// Gradient with respect to `f`; subgradient 0 at the kinks.
    pub fn gradient(self, f: &[f64], y: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = f.iter().zip(y).map(|(a, b)| a - b).collect();
        match self {
            OutputLoss::Square => diff,
            OutputLoss::Abs => diff
                .iter()
                .map(|&d| if d == 0.0 { 0.0 } else { d.signum() })
                .collect(),
            OutputLoss::L2 => {
                let n = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if n == 0.0 {
                    vec![0.0; diff.len()]
                } else {
                    diff.iter().map(|d| d / n).collect()
                }
            }
        }
    }

    /// Bound on every partial derivative `|∂ℓ/∂f_i|`, when global.
    pub fn coordinate_lipschitz(self) -> Option<f64> {
        match self {
            OutputLoss::Square => None,
            OutputLoss::Abs | OutputLoss::L2 => Some(1.0),
        }
    }
}

/// `θ ↦ ℓ(f(θ; x), y)` for one round.
pub struct NetworkLoss<'a, N: Network + ?Sized> {
    pub net: &'a N,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub loss: OutputLoss,
}

impl<'a, N: Network + ?Sized> NetworkLoss<'a, N> {
    pub fn new(net: &'a N, x: Vec<f64>, y: Vec<f64>, loss: OutputLoss) -> Result<Self> {
        if y.len() != net.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "loss target",
                expected: net.output_dim(),
                actual: y.len(),
            });
        }
        Ok(NetworkLoss { net, x, y, loss })
    }
}

impl<N: Network + ?Sized> LossOracle for NetworkLoss<'_, N> {
    fn evaluate(&self, theta: &Tensor) -> Result<Evaluation> {
        let f = self.net.forward_at(theta, &self.x)?;
        let g = self.loss.gradient(&f, &self.y);
        let grad = self.net.backward_at(theta, &self.x, &g)?;
        Ok(Evaluation {
            value: self.loss.value(&f, &self.y),
            grad,
            output_grad: Some(g),
        })
    }

    fn value(&self, theta: &Tensor) -> Result<f64> {
        let f = self.net.forward_at(theta, &self.x)?;
        Ok(self.loss.value(&f, &self.y))
    }

    fn input(&self) -> Option<&[f64]> {
        Some(&self.x)
    }
}
