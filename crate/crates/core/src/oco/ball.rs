use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{gaussian_vec, unit_vector};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMode {
    /// One Frobenius ball over the whole tensor.
    Joint,
    /// One ball of the same radius around every leading-axis slice.
    PerSlice,
}

/// Frobenius-norm ball (or product of per-slice balls) around a center tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct BallSet {
    center: Tensor,
    radius: f64,
    mode: BallMode,
}

impl BallSet {
    pub fn new(center: Tensor, radius: f64, mode: BallMode) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        Ok(BallSet {
            center,
            radius,
            mode,
        })
    }

    pub fn joint(center: Tensor, radius: f64) -> Result<Self> {
        Self::new(center, radius, BallMode::Joint)
    }

    pub fn per_slice(center: Tensor, radius: f64) -> Result<Self> {
        Self::new(center, radius, BallMode::PerSlice)
    }

    pub fn center(&self) -> &Tensor {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn mode(&self) -> BallMode {
        self.mode
    }

    /// Radius of the smallest joint ball around the center containing the set.
    pub fn outer_radius(&self) -> f64 {
        match self.mode {
            BallMode::Joint => self.radius,
            BallMode::PerSlice => self.radius * (self.center.n_slices() as f64).sqrt(),
        }
    }

    /// Largest distance from the center, measured the way the mode measures it.
    pub fn excess_distance(&self, theta: &Tensor) -> Result<f64> {
        self.center.check_shape(theta)?;
        Ok(match self.mode {
            BallMode::Joint => theta.distance(&self.center),
            BallMode::PerSlice => (0..self.center.n_slices())
                .map(|i| slice_distance(theta.slice(i), self.center.slice(i)))
                .fold(0.0, f64::max),
        })
    }

    pub fn contains(&self, theta: &Tensor) -> bool {
        self.contains_within(theta, 0.0)
    }

    pub fn contains_within(&self, theta: &Tensor, tol: f64) -> bool {
        self.excess_distance(theta)
            .map(|d| d <= self.radius + tol)
            .unwrap_or(false)
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, theta: &Tensor) -> Result<Tensor> {
        let mut out = theta.clone();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn project_in_place(&self, theta: &mut Tensor) -> Result<()> {
        self.center.check_shape(theta)?;
        match self.mode {
            BallMode::Joint => {
                shrink_toward(theta.as_mut_slice(), self.center.as_slice(), self.radius)
            }
            BallMode::PerSlice => {
                for i in 0..self.center.n_slices() {
                    shrink_toward(theta.slice_mut(i), self.center.slice(i), self.radius);
                }
            }
        }
        Ok(())
    }

    /// Uniform sample from the set: Gaussian direction, radius `u^{1/n} R`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Tensor {
        let mut out = self.center.clone();
        match self.mode {
            BallMode::Joint => {
                let n = out.len();
                add_ball_sample(rng, out.as_mut_slice(), self.radius, n, None);
            }
            BallMode::PerSlice => {
                let n = out.slice_len();
                for i in 0..out.n_slices() {
                    add_ball_sample(rng, out.slice_mut(i), self.radius, n, None);
                }
            }
        }
        out
    }

    /// Sample at distance exactly `r` from the center (per slice in `PerSlice` mode).
    pub fn sample_on_sphere<R: Rng + ?Sized>(&self, rng: &mut R, r: f64) -> Tensor {
        let mut out = self.center.clone();
        match self.mode {
            BallMode::Joint => {
                let n = out.len();
                add_ball_sample(rng, out.as_mut_slice(), r, n, Some(r));
            }
            BallMode::PerSlice => {
                let n = out.slice_len();
                for i in 0..out.n_slices() {
                    add_ball_sample(rng, out.slice_mut(i), r, n, Some(r));
                }
            }
        }
        out
    }
}

fn slice_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// Points with ‖θ − c‖ ≤ R are left untouched.
fn shrink_toward(theta: &mut [f64], center: &[f64], radius: f64) {
    let dist = slice_distance(theta, center);
    if dist <= radius {
        return;
    }
    let scale = radius / dist;
    for (t, c) in theta.iter_mut().zip(center) {
        *t = c + scale * (*t - c);
    }
}

fn add_ball_sample<R: Rng + ?Sized>(
    rng: &mut R,
    target: &mut [f64],
    radius: f64,
    n: usize,
    fixed: Option<f64>,
) {
    if n == 0 {
        return;
    }
    let dir = unit_vector(rng, n);
    let r = match fixed {
        Some(r) => r,
        None => {
            let u: f64 = rng.random();
            radius * u.powf(1.0 / n as f64)
        }
    };
    for (t, d) in target.iter_mut().zip(dir) {
        *t += r * d;
    }
}

/// Gaussian perturbation helper used by tests and experiments.
pub fn gaussian_like<R: Rng + ?Sized>(rng: &mut R, like: &Tensor, scale: f64) -> Tensor {
    let data = gaussian_vec(rng, like.len())
        .into_iter()
        .map(|v| v * scale)
        .collect();
    Tensor::from_vec(like.shape(), data).expect("shape taken from template")
}
