use nalgebra::DMatrix;

use crate::control::dynamics::{
    build_policy_input, mat_t_vec, mat_vec, recover_disturbance, step, HistoryEncoding, LtvEpisode,
};
use crate::error::{Error, Result};
use crate::neural::Network;
use crate::tensor::Tensor;

/// Everything observed while playing one episode.
#[derive(Clone, Debug)]
pub struct EpisodeResult {
    /// `x_1, …, x_{K+1}`
    pub states: Vec<Vec<f64>>,
    /// Policy outputs `v_k`.
    pub net_outputs: Vec<Vec<f64>>,
    /// Applied controls `u_k` (equal to `v_k` without stabilizing gains).
    pub controls: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    /// `J = Σ_k c_k(x_k, u_k)`
    pub loss: f64,
    /// `w_k = x_{k+1} − A_k x_k − B_k u_k`
    pub recovered: Vec<Vec<f64>>,
    /// Normalized policy inputs `z̄_k`.
    pub inputs: Vec<Vec<f64>>,
}

impl EpisodeResult {
    pub fn max_state_norm(&self) -> f64 {
        self.states
            .iter()
            .map(|x| crate::tensor::norm(x))
            .fold(0.0, f64::max)
    }

    pub fn max_control_norm(&self) -> f64 {
        self.controls
            .iter()
            .map(|u| crate::tensor::norm(u))
            .fold(0.0, f64::max)
    }
}

fn check_policy(net: &(impl Network + ?Sized), ep: &LtvEpisode, enc: HistoryEncoding) -> Result<()> {
    let p = enc.input_dim(ep.horizon(), ep.d_x());
    if net.input_dim() != p {
        return Err(Error::DimensionMismatch {
            context: "policy input",
            expected: p,
            actual: net.input_dim(),
        });
    }
    if net.output_dim() != ep.d_u() {
        return Err(Error::DimensionMismatch {
            context: "policy output",
            expected: ep.d_u(),
            actual: net.output_dim(),
        });
    }
    Ok(())
}

fn non_finite(k: usize, what: &str) -> Error {
    Error::NonFinite {
        round: k,
        what: format!("{what} at episode step {k}"),
    }
}

/// Play the episode under `θ`. Policy inputs are built from disturbances
/// recovered from the realized trajectory, as a learner would.
pub fn rollout<N: Network + ?Sized>(
    net: &N,
    theta: &Tensor,
    ep: &LtvEpisode,
    enc: HistoryEncoding,
) -> Result<EpisodeResult> {
    simulate(net, theta, ep, enc, false)
}

/// Counterfactual play under `θ` with the episode's recorded disturbances
/// driving both the dynamics and the policy inputs.
pub fn counterfactual_rollout<N: Network + ?Sized>(
    net: &N,
    theta: &Tensor,
    ep: &LtvEpisode,
    enc: HistoryEncoding,
) -> Result<EpisodeResult> {
    simulate(net, theta, ep, enc, true)
}

/// `z̄_1, …, z̄_K` from the recorded disturbances.
pub fn policy_inputs(ep: &LtvEpisode, enc: HistoryEncoding) -> Result<Vec<Vec<f64>>> {
    (1..=ep.horizon())
        .map(|k| build_policy_input(&ep.w, k, ep.horizon(), ep.d_x(), enc).map(|z| z.normalized))
        .collect()
}

fn simulate<N: Network + ?Sized>(
    net: &N,
    theta: &Tensor,
    ep: &LtvEpisode,
    enc: HistoryEncoding,
    recorded: bool,
) -> Result<EpisodeResult> {
    check_policy(net, ep, enc)?;
    net.theta_init().check_shape(theta)?;
    let horizon = ep.horizon();
    let mut out = EpisodeResult {
        states: vec![ep.x1.clone()],
        net_outputs: Vec::with_capacity(horizon),
        controls: Vec::with_capacity(horizon),
        stage_costs: Vec::with_capacity(horizon),
        loss: 0.0,
        recovered: Vec::with_capacity(horizon),
        inputs: Vec::with_capacity(horizon),
    };
    for k in 1..=horizon {
        let history = if recorded { &ep.w } else { &out.recovered };
        let z = build_policy_input(history, k, horizon, ep.d_x(), enc)?.normalized;
        let x = out.states[k - 1].clone();
        let v = net.forward_unchecked(theta, &z);
        let u = ep.applied_control(k, &x, &v);
        if u.iter().any(|c| !c.is_finite()) {
            return Err(non_finite(k, "control"));
        }
        let c = ep.cost.value(k, &x, &u);
        if !c.is_finite() {
            return Err(non_finite(k, "stage cost"));
        }
        let next = step(&ep.a[k - 1], &ep.b[k - 1], &x, &u, &ep.w[k - 1])?;
        if next.iter().any(|s| !s.is_finite()) {
            return Err(non_finite(k, "state"));
        }
        out.recovered
            .push(recover_disturbance(&next, &ep.a[k - 1], &ep.b[k - 1], &x, &u)?);
        out.states.push(next);
        out.inputs.push(z);
        out.net_outputs.push(v);
        out.controls.push(u);
        out.stage_costs.push(c);
    }
    out.loss = out.stage_costs.iter().sum();
    Ok(out)
}

/// Open-loop play of policy outputs `v_{1:K}` with the recorded disturbances.
/// Returns the states `x_1..x_{K+1}`, applied controls and the episode loss.
pub fn play_controls(ep: &LtvEpisode, v: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    if v.len() != ep.horizon() {
        return Err(Error::DimensionMismatch {
            context: "control sequence",
            expected: ep.horizon(),
            actual: v.len(),
        });
    }
    let mut states = vec![ep.x1.clone()];
    let mut controls = Vec::with_capacity(v.len());
    let mut costs = Vec::with_capacity(v.len());
    for k in 1..=ep.horizon() {
        let x = &states[k - 1];
        let u = ep.applied_control(k, x, &v[k - 1]);
        costs.push(ep.cost.value(k, x, &u));
        let next = step(&ep.a[k - 1], &ep.b[k - 1], x, &u, &ep.w[k - 1])?;
        controls.push(u);
        states.push(next);
    }
    Ok((states, controls, costs.iter().sum()))
}

/// `∂J/∂v_k` for every step by the adjoint recursion
/// `λ_{K+1} = 0`, `λ_k = ∇_x c_k + F_kᵀ ∇_u c_k + A'_kᵀ λ_{k+1}`,
/// `g_k = ∇_u c_k + B_kᵀ λ_{k+1}`.
pub fn control_gradients(ep: &LtvEpisode, states: &[Vec<f64>], controls: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let horizon = ep.horizon();
    let mut lambda = vec![0.0; ep.d_x()];
    let mut grads = vec![Vec::new(); horizon];
    for k in (1..=horizon).rev() {
        let (gx, gu) = ep.cost.gradient(k, &states[k - 1], &controls[k - 1]);
        let bt = mat_t_vec(&ep.b[k - 1], &lambda);
        grads[k - 1] = gu.iter().zip(&bt).map(|(a, b)| a + b).collect();
        let mut next: Vec<f64> = mat_t_vec(&ep.closed_loop_a(k), &lambda)
            .iter()
            .zip(&gx)
            .map(|(a, b)| a + b)
            .collect();
        if let Some(f) = &ep.gains {
            for (n, v) in next.iter_mut().zip(mat_t_vec(&f[k - 1], &gu)) {
                *n += v;
            }
        }
        lambda = next;
    }
    grads
}

/// Counterfactual loss `L(θ)` on a recorded episode and its gradient
/// `Σ_k ∇_θ f(θ; z̄_k)ᵀ g_k`.
pub fn episode_loss_and_gradient<N: Network + ?Sized>(
    net: &N,
    theta: &Tensor,
    ep: &LtvEpisode,
    enc: HistoryEncoding,
) -> Result<(f64, Tensor)> {
    let res = counterfactual_rollout(net, theta, ep, enc)?;
    let g = control_gradients(ep, &res.states, &res.controls);
    let mut grad = Tensor::zeros(theta.shape());
    for (k, (z, gk)) in res.inputs.iter().zip(&g).enumerate() {
        if gk.iter().all(|v| *v == 0.0) {
            continue;
        }
        let part = net.backward_unchecked(theta, z, gk);
        grad.axpy(1.0, &part);
        if !grad.is_finite() {
            return Err(non_finite(k + 1, "episode gradient"));
        }
    }
    Ok((res.loss, grad))
}

/// Closed-form states `x_k = x_k^nat + Σ_{i<k} M_i^k v_i` with
/// `M_i^k = A'_{k−1} ⋯ A'_{i+1} B_i`.
#[derive(Clone, Debug)]
pub struct TransferDecomposition {
    /// `x_1^nat, …, x_{K+1}^nat`
    pub natural: Vec<Vec<f64>>,
    /// `transfer[k−1][i−1] = M_i^k` for `1 ≤ i < k ≤ K+1`.
    pub transfer: Vec<Vec<DMatrix<f64>>>,
    pub states: Vec<Vec<f64>>,
}

impl TransferDecomposition {
    pub fn m(&self, k: usize, i: usize) -> &DMatrix<f64> {
        &self.transfer[k - 1][i - 1]
    }
}

pub fn transfer_decomposition(ep: &LtvEpisode, v: &[Vec<f64>]) -> Result<TransferDecomposition> {
    let horizon = ep.horizon();
    if v.len() != horizon {
        return Err(Error::DimensionMismatch {
            context: "control sequence",
            expected: horizon,
            actual: v.len(),
        });
    }
    let dx = ep.d_x();
    let a: Vec<DMatrix<f64>> = (1..=horizon).map(|k| ep.closed_loop_a(k)).collect();
    let mut natural = Vec::with_capacity(horizon + 1);
    let mut transfer = Vec::with_capacity(horizon + 1);
    let mut states = Vec::with_capacity(horizon + 1);
    for k in 1..=horizon + 1 {
        // prods[i] = A'_{k−1} ⋯ A'_{i+1} for i = 0..k−1 (i = 0 reaches A'_1)
        let mut prods = vec![DMatrix::<f64>::identity(dx, dx); k];
        for i in (0..k - 1).rev() {
            prods[i] = &prods[i + 1] * &a[i];
        }
        let mut nat = mat_vec(&prods[0], &ep.x1);
        for i in 1..k {
            for (n, c) in nat.iter_mut().zip(mat_vec(&prods[i], &ep.w[i - 1])) {
                *n += c;
            }
        }
        let ms: Vec<DMatrix<f64>> = (1..k).map(|i| &prods[i] * &ep.b[i - 1]).collect();
        let mut x = nat.clone();
        for (i, m) in ms.iter().enumerate() {
            for (s, c) in x.iter_mut().zip(mat_vec(m, &v[i])) {
                *s += c;
            }
        }
        natural.push(nat);
        transfer.push(ms);
        states.push(x);
    }
    Ok(TransferDecomposition {
        natural,
        transfer,
        states,
    })
}
