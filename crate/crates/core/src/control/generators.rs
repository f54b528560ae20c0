use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::dynamics::{CostSpec, LtvEpisode};
use crate::control::stability::{certify, op_norm, Certificate};
use crate::error::{Error, Result};
use crate::rng::{gaussian_vec, unit_vector};
use crate::tensor::norm;

/// Disturbance sequences, all clipped to norm `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceModel {
    Zero,
    /// Coordinates i.i.d. uniform on `[−W/√d_x, W/√d_x]`.
    Uniform,
    /// `w_k[j] = (W/√d_x) sin(2π k / period + φ_j + drift · t)` for episode `t`.
    Sinusoidal { period: f64, drift: f64 },
    /// `w_k = (−1)^{k+t} W e` for a fixed random unit `e`.
    SignAlternating,
}

fn clip(mut w: Vec<f64>, bound: f64) -> Vec<f64> {
    let n = norm(&w);
    if n > bound {
        let s = bound / n;
        w.iter_mut().for_each(|v| *v *= s);
    }
    w
}

/// Disturbances `w_1..w_K` for episode `t` (0-based).
pub fn generate_disturbances<R: Rng + ?Sized>(
    model: &DisturbanceModel,
    horizon: usize,
    d_x: usize,
    w_bound: f64,
    episode: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let scale = w_bound / (d_x as f64).sqrt();
    match model {
        DisturbanceModel::Zero => vec![vec![0.0; d_x]; horizon],
        DisturbanceModel::Uniform => (0..horizon)
            .map(|_| {
                let w = (0..d_x).map(|_| scale * rng.random_range(-1.0..=1.0)).collect();
                clip(w, w_bound)
            })
            .collect(),
        DisturbanceModel::Sinusoidal { period, drift } => {
            let phases: Vec<f64> = (0..d_x).map(|j| PI * j as f64 / d_x as f64).collect();
            (1..=horizon)
                .map(|k| {
                    let w = phases
                        .iter()
                        .map(|ph| {
                            scale * (2.0 * PI * k as f64 / period + ph + drift * episode as f64).sin()
                        })
                        .collect();
                    clip(w, w_bound)
                })
                .collect()
        }
        DisturbanceModel::SignAlternating => {
            let e = unit_vector(rng, d_x);
            (1..=horizon)
                .map(|k| {
                    let s = if (k + episode) % 2 == 0 { 1.0 } else { -1.0 };
                    clip(e.iter().map(|v| s * w_bound * v).collect(), w_bound)
                })
                .collect()
        }
    }
}

/// Parameters of a random sequentially stable system family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtvFamily {
    pub d_x: usize,
    pub d_u: usize,
    pub horizon: usize,
    /// Every `A_k` is `s_k Q_k` with `Q_k` orthogonal and `s_k ∈ [ρ/2, ρ]`.
    pub rho: f64,
    /// Every `B_k` has operator norm in `[g/2, g]`; the certificate uses
    /// `C₂ = max(g, 1)`.
    pub input_gain: f64,
    pub w_bound: f64,
    /// Tracking targets have norm at most this.
    pub target_scale: f64,
    pub mu: f64,
}

impl Default for LtvFamily {
    fn default() -> Self {
        LtvFamily {
            d_x: 2,
            d_u: 2,
            horizon: 10,
            rho: 0.9,
            input_gain: 1.0,
            w_bound: 1.0,
            target_scale: 1.0,
            mu: 0.1,
        }
    }
}

/// One draw of the system matrices, initial state and targets. Episodes of
/// the same system differ only in their disturbances.
#[derive(Clone, Debug)]
pub struct LtvSystem {
    pub x1: Vec<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub mu: f64,
    pub w_bound: f64,
    pub certificate: Certificate,
}

fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_vec(n, n, gaussian_vec(rng, n * n));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl LtvFamily {
    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.d_u == 0 || self.horizon == 0 {
            return Err(Error::invalid("d_x, d_u and horizon must be positive"));
        }
        if !((0.0..1.0).contains(&self.rho) && self.input_gain > 0.0 && self.w_bound >= 0.0) {
            return Err(Error::invalid("need 0 <= rho < 1, input_gain > 0, w_bound >= 0"));
        }
        if !(self.target_scale >= 0.0 && self.mu >= 0.0) {
            return Err(Error::invalid("target_scale and mu must be non-negative"));
        }
        Ok(())
    }

    /// Draw a system and verify its certificate `(1, ρ, C₂)`.
    pub fn sample_system<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LtvSystem> {
        self.validate()?;
        let (dx, du) = (self.d_x, self.d_u);
        let a = (0..self.horizon)
            .map(|_| {
                let s = self.rho * rng.random_range(0.5..=1.0);
                random_orthogonal(rng, dx) * s
            })
            .collect();
        let b = (0..self.horizon)
            .map(|_| {
                let g = DMatrix::from_vec(dx, du, gaussian_vec(rng, dx * du));
                let target = self.input_gain * rng.random_range(0.5..=1.0);
                let n = op_norm(&g).max(1e-300);
                g * (target / n)
            })
            .collect();
        let x1 = unit_vector(rng, dx)
            .into_iter()
            .map(|v| v * self.w_bound * rng.random_range(0.0..=1.0))
            .collect();
        let targets = (0..self.horizon)
            .map(|_| {
                let r = self.target_scale * rng.random_range(0.0..=1.0);
                unit_vector(rng, dx).into_iter().map(|v| v * r).collect()
            })
            .collect();
        let certificate = Certificate::new(1.0, self.rho, self.input_gain.max(1.0))?;
        let sys = LtvSystem {
            x1,
            a,
            b,
            targets,
            mu: self.mu,
            w_bound: self.w_bound,
            certificate,
        };
        let mut probe = sys.episode(vec![vec![0.0; dx]; self.horizon])?;
        let report = certify(&mut probe, certificate);
        if !report.pass {
            return Err(Error::invalid(format!(
                "generated system failed its certificate: {:?}",
                report.witness
            )));
        }
        Ok(sys)
    }

    /// A fresh system with disturbances from `model`.
    pub fn sample_episode<R: Rng + ?Sized>(
        &self,
        model: &DisturbanceModel,
        rng: &mut R,
    ) -> Result<LtvEpisode> {
        let sys = self.sample_system(rng)?;
        let w = generate_disturbances(model, self.horizon, self.d_x, self.w_bound, 0, rng);
        sys.episode(w)
    }
}

impl LtvSystem {
    /// Episode with the given disturbances, carrying the verified certificate.
    pub fn episode(&self, w: Vec<Vec<f64>>) -> Result<LtvEpisode> {
        let mut ep = LtvEpisode::new(
            self.x1.clone(),
            self.a.clone(),
            self.b.clone(),
            w,
            CostSpec::QuadraticTracking {
                targets: self.targets.clone(),
                mu: self.mu,
            },
            self.w_bound,
        )?;
        ep.certificate = Some(self.certificate);
        Ok(ep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::stability::check_sequential_stability;
    use crate::rng::rng_from_seed;

    #[test]
    fn disturbances_respect_bound() {
        let mut rng = rng_from_seed(1);
        for model in [
            DisturbanceModel::Zero,
            DisturbanceModel::Uniform,
            DisturbanceModel::Sinusoidal { period: 7.0, drift: 0.3 },
            DisturbanceModel::SignAlternating,
        ] {
            for t in 0..3 {
                let w = generate_disturbances(&model, 12, 3, 0.5, t, &mut rng);
                assert_eq!(w.len(), 12);
                assert!(w.iter().all(|v| norm(v) <= 0.5 * (1.0 + 1e-12)), "{model:?}");
            }
        }
    }

    #[test]
    fn sign_alternation() {
        let mut rng = rng_from_seed(2);
        let w = generate_disturbances(&DisturbanceModel::SignAlternating, 4, 2, 1.0, 0, &mut rng);
        for k in 1..4 {
            assert!((w[k][0] + w[k - 1][0]).abs() < 1e-15);
            assert!((norm(&w[k]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_systems_are_certified() {
        let fam = LtvFamily::default();
        let mut rng = rng_from_seed(3);
        for _ in 0..10 {
            let ep = fam.sample_episode(&DisturbanceModel::Uniform, &mut rng).unwrap();
            let cert = ep.certificate.unwrap();
            assert!(check_sequential_stability(&ep, &cert).pass);
            assert!(norm(&ep.x1) <= fam.w_bound);
        }
    }

    #[test]
    fn orthogonal_factor() {
        let mut rng = rng_from_seed(4);
        let q = random_orthogonal(&mut rng, 4);
        let e = q.transpose() * &q - DMatrix::identity(4, 4);
        assert!(e.abs().max() < 1e-12);
    }
}
