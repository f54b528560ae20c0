//! One-dimensional loss streams on `[−R, R]` with a known gradient bound.
//!
//! The quadratic family `(θ − c)²/2` is convex. The wavy family adds a
//! ripple, `(θ − y_t)²/2 + α sin(ωθ + φ_t)`, which is non-convex once
//! `αω² > 1`; its near-convexity margin is certified numerically before use.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{SyntheticConfig, SyntheticFamily};
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarLoss {
    pub target: f64,
    pub alpha: f64,
    pub omega: f64,
    pub phase: f64,
}

impl ScalarLoss {
    pub fn value(&self, x: f64) -> f64 {
        0.5 * (x - self.target).powi(2) + self.alpha * (self.omega * x + self.phase).sin()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        x - self.target + self.alpha * self.omega * (self.omega * x + self.phase).cos()
    }

    /// Bound on `|ℓ''|`.
    pub fn curvature_bound(&self) -> f64 {
        1.0 + self.alpha * self.omega * self.omega
    }

    /// Bound on `|ℓ'|` over `[−R, R]`.
    pub fn gradient_bound(&self, radius: f64) -> f64 {
        radius + self.target.abs() + self.alpha * self.omega
    }

    pub fn oracle_fn(self) -> impl Fn(&Tensor) -> Result<(f64, Tensor)> + Sync + Send + Copy {
        move |t: &Tensor| {
            let x = t.as_slice()[0];
            Ok((self.value(x), Tensor::vector(vec![self.derivative(x)])))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStream {
    pub radius: f64,
    pub losses: Vec<ScalarLoss>,
}

/// Draw `rounds` losses. Quadratic rounds all share the target `c`; wavy
/// rounds draw `y_t ~ U[−spread, spread]` and `φ_t ~ U[0, 2π)`.
pub fn sample_stream(cfg: &SyntheticConfig, rounds: usize, seed: u64) -> SyntheticStream {
    let mut rng = rng_from_seed(seed);
    let losses = (0..rounds)
        .map(|_| match cfg.family {
            SyntheticFamily::Quadratic => ScalarLoss {
                target: cfg.target,
                alpha: 0.0,
                omega: 0.0,
                phase: 0.0,
            },
            SyntheticFamily::Wavy => ScalarLoss {
                target: if cfg.spread > 0.0 {
                    rng.random_range(-cfg.spread..=cfg.spread)
                } else {
                    0.0
                },
                alpha: cfg.alpha,
                omega: cfg.omega,
                phase: rng.random_range(0.0..2.0 * PI),
            },
        })
        .collect();
    SyntheticStream {
        radius: cfg.radius,
        losses,
    }
}

impl SyntheticStream {
    /// `G = max_t max_{|θ| ≤ R} |ℓ_t'(θ)|` (an analytic upper bound).
    pub fn gradient_bound(&self) -> f64 {
        self.losses
            .iter()
            .map(|l| l.gradient_bound(self.radius))
            .fold(0.0, f64::max)
    }

    pub fn total(&self, x: f64) -> f64 {
        self.losses.iter().map(|l| l.value(x)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCertificate {
    /// Largest `ℓ(x) + ℓ'(x)(y − x) − ℓ(y)` seen on the grid.
    pub grid_gap: f64,
    /// Worst-case growth of the gap between grid points.
    pub discretization: f64,
    /// `max(0, grid_gap + discretization)`; valid over the whole interval.
    pub epsilon: f64,
    pub grid: usize,
}

/// Certify `ℓ(y) ≥ ℓ(x) + ℓ'(x)(y − x) − ε` for all `x, y ∈ [−R, R]` and every
/// round. The gap has `|∂/∂y| ≤ 2G` and `|∂/∂x| ≤ 2R·M₂`, so the grid maximum
/// plus `(h/2)(2G + 2R·M₂)` bounds it everywhere.
pub fn certify_epsilon(stream: &SyntheticStream, grid: usize) -> Result<EpsilonCertificate> {
    if grid < 2 {
        return Err(Error::invalid("certification grid needs at least 2 points"));
    }
    let r = stream.radius;
    let h = 2.0 * r / (grid - 1) as f64;
    let xs: Vec<f64> = (0..grid).map(|i| -r + h * i as f64).collect();
    let mut grid_gap = f64::NEG_INFINITY;
    let mut curvature = 0.0f64;
    let mut values = vec![0.0; grid];
    let mut derivs = vec![0.0; grid];
    for l in &stream.losses {
        curvature = curvature.max(l.curvature_bound());
        for (i, &x) in xs.iter().enumerate() {
            values[i] = l.value(x);
            derivs[i] = l.derivative(x);
        }
        for i in 0..grid {
            for j in 0..grid {
                let gap = values[i] + derivs[i] * (xs[j] - xs[i]) - values[j];
                grid_gap = grid_gap.max(gap);
            }
        }
    }
    if stream.losses.is_empty() {
        grid_gap = 0.0;
    }
    let discretization = 0.5 * h * (2.0 * stream.gradient_bound() + 2.0 * r * curvature);
    Ok(EpsilonCertificate {
        grid_gap,
        discretization,
        epsilon: (grid_gap + discretization).max(0.0),
        grid,
    })
}

/// Best fixed decision: dense grid, then golden-section refinement around
/// the best grid point. Returns `(θ*, Σ_t ℓ_t(θ*))`.
pub fn grid_comparator(stream: &SyntheticStream, grid: usize) -> (f64, f64) {
    let r = stream.radius;
    let h = 2.0 * r / (grid.max(2) - 1) as f64;
    let (mut best_x, mut best_v) = (0.0, f64::INFINITY);
    for i in 0..grid.max(2) {
        let x = -r + h * i as f64;
        let v = stream.total(x);
        if v < best_v {
            best_x = x;
            best_v = v;
        }
    }
    let (mut lo, mut hi) = ((best_x - h).max(-r), (best_x + h).min(r));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (stream.total(a), stream.total(b));
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = stream.total(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = stream.total(b);
        }
    }
    for (x, v) in [(a, fa), (b, fb)] {
        if v < best_v {
            best_x = x;
            best_v = v;
        }
    }
    (best_x, best_v)
}
