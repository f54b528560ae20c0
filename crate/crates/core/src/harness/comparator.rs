//! Fixed comparators for regret: an approximate offline minimizer of the
//! summed losses and the explicit parameter that reproduces an RF teacher.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ComparatorKind;
use crate::neural::{Network, TwoLayerParams};
use crate::oco::{BallSet, LossOracle};
use crate::rf_teacher::RfTeacher;
use crate::tensor::Tensor;

/// Diagnostics of the offline descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    /// Full-gradient passes over the stream, summed over all starts.
    pub passes: usize,
    pub budget: usize,
    pub starts: usize,
    /// Index of the start that produced the reported point.
    pub best_start: usize,
    /// `‖θ − Π(θ − ∇F)‖` at the reported point.
    pub final_grad_norm: f64,
    /// Stationarity reached before the budget ran out (best start).
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct ComparatorResult {
    pub kind: ComparatorKind,
    pub theta: Tensor,
    /// `ℓ_t(θ*)` for every round.
    pub losses: Vec<f64>,
    pub total: f64,
    /// The offline minimizer is only a best-found point, never a certified argmin.
    pub approximate: bool,
    pub solver: Option<SolverInfo>,
}

impl ComparatorResult {
    pub fn cumulative(&self) -> Vec<f64> {
        self.losses
            .iter()
            .scan(0.0, |acc, l| {
                *acc += l;
                Some(*acc)
            })
            .collect()
    }
}

/// Per-round values at `theta`, evaluated in parallel, returned in order.
pub fn round_losses<O: LossOracle + Sync>(oracles: &[O], theta: &Tensor) -> Result<Vec<f64>> {
    oracles.par_iter().map(|o| o.value(theta)).collect()
}

/// Evaluate a fixed comparator point on every round.
pub fn fixed_comparator<O: LossOracle + Sync>(
    kind: ComparatorKind,
    oracles: &[O],
    theta: Tensor,
) -> Result<ComparatorResult> {
    let losses = round_losses(oracles, &theta)?;
    Ok(ComparatorResult {
        kind,
        total: losses.iter().sum(),
        theta,
        losses,
        approximate: false,
        solver: None,
    })
}

fn total_and_gradient<O: LossOracle + Sync>(oracles: &[O], theta: &Tensor) -> Result<(f64, Tensor)> {
    let evals: Vec<_> = oracles
        .par_iter()
        .map(|o| o.evaluate(theta))
        .collect::<Result<_>>()?;
    let mut grad = Tensor::zeros(theta.shape());
    let mut total = 0.0;
    for e in &evals {
        total += e.value;
        grad.axpy(1.0, &e.grad);
    }
    Ok((total, grad))
}

fn total<O: LossOracle + Sync>(oracles: &[O], theta: &Tensor) -> Result<f64> {
    Ok(round_losses(oracles, theta)?.iter().sum())
}

struct Descent {
    theta: Tensor,
    value: f64,
    passes: usize,
    grad_map: f64,
    converged: bool,
}

const STATIONARY_TOL: f64 = 1e-9;
/// Relative movement below which a projected step is a fixed point up to rounding.
const FIXED_POINT_TOL: f64 = 1e-13;
/// Step-size floor relative to the first step; below it the descent gives up.
const MIN_STEP_RATIO: f64 = 1e-20;

/// `‖θ − Π(θ − ∇F)‖`, zero exactly at constrained stationary points.
fn gradient_mapping(set: &BallSet, theta: &Tensor, grad: &Tensor) -> Result<f64> {
    let mut t = theta.clone();
    t.axpy(-1.0, grad);
    Ok(set.project(&t)?.distance(theta))
}

/// Projected gradient descent on `Σ_t ℓ_t`, accepting a step only when it
/// lowers the total. The step grows by 1.5 on acceptance and halves on
/// rejection.
fn descend<O: LossOracle + Sync>(oracles: &[O], set: &BallSet, start: &Tensor, budget: usize) -> Result<Descent> {
    let mut theta = set.project(start)?;
    let (mut value, mut grad) = total_and_gradient(oracles, &theta)?;
    let mut passes = 1;
    let gnorm = grad.norm();
    let first_step = if gnorm > 0.0 {
        (2.0 * set.outer_radius()).max(1e-3) / gnorm
    } else {
        1.0
    };
    let mut step = first_step;
    let mut converged = false;
    while passes < budget {
        let mut trial = theta.clone();
        trial.axpy(-step, &grad);
        let trial = set.project(&trial)?;
        let moved = trial.distance(&theta);
        if moved <= FIXED_POINT_TOL * theta.norm().max(1.0)
            || moved / step <= STATIONARY_TOL * (1.0 + value.abs())
        {
            converged = true;
            break;
        }
        let trial_value = total(oracles, &trial)?;
        if trial_value.is_finite() && trial_value < value {
            let (v, g) = total_and_gradient(oracles, &trial)?;
            passes += 1;
            theta = trial;
            value = v;
            grad = g;
            step *= 1.5;
        } else {
            step *= 0.5;
            if step < MIN_STEP_RATIO * first_step {
                break;
            }
        }
    }
    Ok(Descent {
        grad_map: gradient_mapping(set, &theta, &grad)?,
        theta,
        value,
        passes,
        converged,
    })
}

/// Approximate `argmin_{θ ∈ set} Σ_t ℓ_t(θ)` by projected descent from each
/// start, keeping the best. `budget` bounds the accepted full-gradient passes
/// per start. Giving more budget never raises the reported total.
pub fn offline_comparator<O: LossOracle + Sync>(
    oracles: &[O],
    set: &BallSet,
    starts: &[Tensor],
    budget: usize,
) -> Result<ComparatorResult> {
    if starts.is_empty() {
        return Err(Error::invalid("offline comparator needs at least one start"));
    }
    if budget == 0 {
        return Err(Error::invalid("offline comparator budget must be positive"));
    }
    let mut best: Option<(usize, Descent)> = None;
    let mut passes = 0;
    for (idx, s) in starts.iter().enumerate() {
        let d = descend(oracles, set, s, budget)?;
        passes += d.passes;
        if best.as_ref().map_or(true, |(_, b)| d.value < b.value) {
            best = Some((idx, d));
        }
    }
    let (best_start, d) = best.expect("at least one start");
    if !d.converged {
        log::warn!(
            "offline comparator stopped at its budget of {budget} passes (gradient mapping {:.3e})",
            d.grad_map
        );
    }
    let losses = round_losses(oracles, &d.theta)?;
    Ok(ComparatorResult {
        kind: ComparatorKind::OfflineGdOracle,
        total: losses.iter().sum(),
        theta: d.theta,
        losses,
        approximate: true,
        solver: Some(SolverInfo {
            passes,
            budget,
            starts: starts.len(),
            best_start,
            final_grad_norm: d.grad_map,
            converged: d.converged,
        }),
    })
}

/// `θ*[r] = θ₁[r] + (b/2) c_r a_r` and `θ*[r+m/2] = θ₁[r+m/2] − (b/2) c_r a_r`
/// for every output slice. The student's linearization at θ₁ evaluated at θ*
/// equals the teacher exactly.
///
/// The teacher's features must be the student's first-half initialization
/// rows (as produced by sampling the teacher for this student).
pub fn constructive_theta_star(teacher: &RfTeacher, student: &TwoLayerParams) -> Result<Tensor> {
    let (p, d, m) = (student.p(), student.d(), student.m());
    if teacher.p() != p || teacher.d() != d || 2 * teacher.m_rf() != m {
        return Err(Error::invalid(format!(
            "teacher (p={}, d={}, m_rf={}) does not match student (p={p}, d={d}, m={m})",
            teacher.p(),
            teacher.d(),
            teacher.m_rf()
        )));
    }
    if teacher.activation().tag() != student.activation().tag() {
        return Err(Error::invalid("teacher and student activations differ"));
    }
    let half = m / 2;
    let init = student.theta_init();
    for i in 0..d {
        if teacher.features().slice(i) != &init.slice(i)[..half * p] {
            return Err(Error::invalid(
                "teacher features are not the student's initialization rows",
            ));
        }
    }
    let mut theta = init.clone();
    let scale = student.b() / 2.0;
    for i in 0..d {
        let signs = student.half_signs(i).to_vec();
        let coefs = teacher.coefs().slice(i).to_vec();
        let slice = theta.slice_mut(i);
        for r in 0..half {
            let s = scale * signs[r];
            for j in 0..p {
                let delta = s * coefs[r * p + j];
                slice[r * p + j] += delta;
                slice[(r + half) * p + j] -= delta;
            }
        }
    }
    Ok(theta)
}
