//! The two network families: a two-layer net with symmetric initialization
//! and a depth-H ReLU net, one scalar subnetwork per output coordinate.
//!
//! Both expose evaluation at an arbitrary parameter tensor θ (frozen parts
//! come from `self`) so that optimizers and comparators can probe points
//! other than the current iterate.

mod activation;
mod deep;
mod loss;
mod theory;
mod two_layer;

pub use activation::{grid_constants, Activation, SmoothActivation};
pub use deep::{init_deep, DeepParams};
pub use loss::{NetworkLoss, OutputLoss};
pub use theory::{
    deep_recommended_radius, theory_constants, two_layer_recommended_radius, ArchMeta,
    DeepKappa, TheoryConstants,
};
pub use two_layer::{init_two_layer, TwoLayerParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{norm, Tensor};

/// Allowed deviation of `‖x‖₂` from 1.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputCheck {
    /// Non-unit inputs are rejected.
    #[default]
    Strict,
    /// Non-unit inputs are logged and evaluated anyway.
    Lenient,
}

pub fn check_unit_input(x: &[f64], mode: InputCheck) -> Result<()> {
    let n = norm(x);
    if (n - 1.0).abs() <= UNIT_NORM_TOL {
        return Ok(());
    }
    match mode {
        InputCheck::Strict => Err(Error::NonUnitInput { norm: n }),
        InputCheck::Lenient => {
            log::warn!("network input has norm {n}, expected 1");
            Ok(())
        }
    }
}

pub trait Network: Send + Sync {
    /// `"two_layer"` or `"deep"`.
    fn arch(&self) -> &'static str;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn theta(&self) -> &Tensor;
    fn theta_init(&self) -> &Tensor;
    fn set_theta(&mut self, theta: Tensor) -> Result<()>;
    fn input_check(&self) -> InputCheck;

    /// Evaluate without the unit-norm check. Dimensions must already agree.
    fn forward_unchecked(&self, theta: &Tensor, x: &[f64]) -> Vec<f64>;

    /// `Σ_i upstream_i ∇_θ f_i(θ; x)`, without the unit-norm check.
    fn backward_unchecked(&self, theta: &Tensor, x: &[f64], upstream: &[f64]) -> Tensor;

    fn check_dims(&self, theta: &Tensor, x: &[f64]) -> Result<()> {
        self.theta_init().check_shape(theta)?;
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn forward_at(&self, theta: &Tensor, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(theta, x)?;
        check_unit_input(x, self.input_check())?;
        Ok(self.forward_unchecked(theta, x))
    }

    fn backward_at(&self, theta: &Tensor, x: &[f64], upstream: &[f64]) -> Result<Tensor> {
        self.check_dims(theta, x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "upstream gradient",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        check_unit_input(x, self.input_check())?;
        Ok(self.backward_unchecked(theta, x, upstream))
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_at(self.theta(), x)
    }

    fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Tensor> {
        self.backward_at(self.theta(), x, upstream)
    }

    /// Hex SHA-256 over every frozen (non-trainable) quantity.
    fn frozen_checksum(&self) -> String;
}

pub(crate) fn sha256_hex(chunks: &[&[f64]]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for chunk in chunks {
        for v in *chunk {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
