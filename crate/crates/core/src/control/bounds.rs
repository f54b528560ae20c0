use serde::{Deserialize, Serialize};

use crate::control::dynamics::LtvEpisode;
use crate::control::rollout::{control_gradients, EpisodeResult};
use crate::error::{Error, Result};
use crate::tensor::norm;

/// Measured state and gradient sizes of one certified episode against the
/// explicit bounds implied by its certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// `D_x = max_k ‖x_k‖` over the cost-bearing steps.
    pub max_state: f64,
    /// `D_u = max_k ‖v_k‖` over the policy outputs.
    pub max_control: f64,
    /// `L'_c = L_c max{1, D_x + D_u}`
    pub cost_lipschitz: f64,
    /// `C₁/(1−ρ) (W + D_u C₂)`
    pub state_bound: f64,
    /// `max_k ‖∂L/∂v_k‖`
    pub max_control_grad: f64,
    /// `L'_c C₁C₂/(1−ρ)`
    pub grad_bound: f64,
    /// `L'_c (1 + C₁C₂/(1−ρ))`, which also counts the direct `∇_u c_k` term.
    pub grad_bound_with_direct: f64,
    pub states_ok: bool,
    pub grad_ok: bool,
}

impl BoundsReport {
    pub fn pass(&self) -> bool {
        self.states_ok && self.grad_ok
    }
}

const REL_SLACK: f64 = 1e-12;

/// Check the bounded-state and control-Lipschitz inequalities on a played
/// episode. The episode must carry a certificate; `result` must come from
/// playing this episode (its recorded disturbances drive the states).
pub fn check_episode_bounds(ep: &LtvEpisode, result: &EpisodeResult) -> Result<BoundsReport> {
    let cert = ep
        .certificate
        .ok_or_else(|| Error::invalid("episode has no stability certificate"))?;
    let horizon = ep.horizon();
    if result.states.len() != horizon + 1 || result.controls.len() != horizon {
        return Err(Error::DimensionMismatch {
            context: "episode result",
            expected: horizon,
            actual: result.controls.len(),
        });
    }
    let max_state = result.states[..horizon].iter().map(|x| norm(x)).fold(0.0, f64::max);
    let max_all_states = result.states.iter().map(|x| norm(x)).fold(0.0, f64::max);
    let max_control = result.net_outputs.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let max_applied = result.controls.iter().map(|u| norm(u)).fold(0.0, f64::max);
    let cost_lipschitz = ep.cost.lipschitz() * (max_state + max_applied).max(1.0);
    let gain = cert.state_gain();
    let state_bound = gain * (ep.w_bound + max_control * cert.c2);
    let grads = control_gradients(ep, &result.states, &result.controls);
    let max_control_grad = grads.iter().map(|g| norm(g)).fold(0.0, f64::max);
    let grad_bound = cost_lipschitz * cert.c2 * gain;
    Ok(BoundsReport {
        max_state,
        max_control,
        cost_lipschitz,
        state_bound,
        max_control_grad,
        grad_bound,
        grad_bound_with_direct: cost_lipschitz * (1.0 + cert.c2 * gain),
        states_ok: max_all_states <= state_bound * (1.0 + REL_SLACK),
        grad_ok: max_control_grad <= grad_bound * (1.0 + REL_SLACK),
    })
}
