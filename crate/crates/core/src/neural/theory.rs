use serde::{Deserialize, Serialize};

/// Hidden constants in front of the deep-network rates. None of these are
/// known in closed form; the defaults are monitoring values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepKappa {
    /// `|f_i(θ₁; x)| ≤ κ √m`
    pub output: f64,
    /// `‖∇_{θ[i]} f_i‖_F ≤ κ H √m`
    pub gradient: f64,
    /// `ε ≤ κ R^{4/3} H^{5/2} √(m log m) L √d`
    pub near_convex: f64,
    /// `R = κ (p / (H m))^{3/2}`
    pub radius: f64,
}

impl Default for DeepKappa {
    fn default() -> Self {
        DeepKappa {
            output: 1.0,
            gradient: 1.0,
            near_convex: 1.0,
            radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum ArchMeta {
    TwoLayer {
        m: usize,
        b: f64,
        /// activation constant
        c: f64,
    },
    Deep {
        m: usize,
        depth: usize,
        d: usize,
        kappa: DeepKappa,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Bound on the Frobenius norm of the loss gradient.
    pub gradient_bound: f64,
    /// Near-convexity margin ε.
    pub epsilon: f64,
    /// `η₀` in `η_t = η₀ t^{-1/2}`.
    pub eta0: f64,
    pub radius: f64,
}

/// Constants for an `L`-Lipschitz outer loss over a ball of radius `radius`.
pub fn theory_constants(arch: &ArchMeta, lipschitz: f64, radius: f64) -> TheoryConstants {
    match *arch {
        ArchMeta::TwoLayer { m, b, c } => {
            let sm = (m as f64).sqrt();
            TheoryConstants {
                gradient_bound: c * lipschitz * sm / b,
                epsilon: 2.0 * c * lipschitz * radius * radius / b,
                eta0: 2.0 * radius * b / (c * lipschitz * sm),
                radius,
            }
        }
        ArchMeta::Deep { m, depth, d, kappa } => {
            let (mf, hf) = (m as f64, depth as f64);
            TheoryConstants {
                gradient_bound: kappa.gradient * lipschitz * hf * mf.sqrt(),
                epsilon: kappa.near_convex
                    * radius.powf(4.0 / 3.0)
                    * hf.powf(2.5)
                    * (mf * mf.max(2.0).ln()).sqrt()
                    * lipschitz
                    * (d as f64).sqrt(),
                eta0: 2.0 * radius / (lipschitz * hf * mf.sqrt()),
                radius,
            }
        }
    }
}

/// Radius at which a two-layer net of width `m` and scale `b` contains an
/// exact representation of every teacher of RF-norm `D`: `b D √d / √m`.
pub fn two_layer_recommended_radius(m: usize, b: f64, rf_norm: f64, d: usize) -> f64 {
    b * rf_norm * (d as f64).sqrt() / (m as f64).sqrt()
}

/// `κ (p / (H m))^{3/2}`, logarithmic factors dropped.
pub fn deep_recommended_radius(m: usize, depth: usize, p: usize, kappa: f64) -> f64 {
    kappa * (p as f64 / (depth as f64 * m as f64)).powf(1.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_layer_instantiation() {
        let arch = ArchMeta::TwoLayer { m: 256, b: 16.0, c: 1.0 };
        let k = theory_constants(&arch, 1.0, 2.0);
        assert_eq!(k.epsilon, 0.5);
        assert_eq!(k.gradient_bound, 1.0);
        assert_eq!(k.eta0, 4.0);
    }

    #[test]
    fn degenerate_ball() {
        let arch = ArchMeta::TwoLayer { m: 64, b: 8.0, c: 1.0 };
        let k = theory_constants(&arch, 1.0, 0.0);
        assert_eq!(k.epsilon, 0.0);
        assert_eq!(k.eta0, 0.0);
    }

    #[test]
    fn doubling_scale() {
        let k1 = theory_constants(&ArchMeta::TwoLayer { m: 100, b: 3.0, c: 1.0 }, 2.0, 1.5);
        let k2 = theory_constants(&ArchMeta::TwoLayer { m: 100, b: 6.0, c: 1.0 }, 2.0, 1.5);
        assert!((k2.epsilon - k1.epsilon / 2.0).abs() < 1e-15);
        assert!((k2.gradient_bound - k1.gradient_bound / 2.0).abs() < 1e-15);
        assert!((k2.eta0 - 2.0 * k1.eta0).abs() < 1e-15);
    }

    #[test]
    fn deep_schedule() {
        let arch = ArchMeta::Deep { m: 16, depth: 2, d: 1, kappa: DeepKappa::default() };
        let k = theory_constants(&arch, 1.0, 0.5);
        assert_eq!(k.eta0, 2.0 * 0.5 / (2.0 * 4.0));
        assert_eq!(k.gradient_bound, 8.0);
    }

    #[test]
    fn recommended_radius_with_default_scale() {
        // b = √m reduces to D √d
        assert!((two_layer_recommended_radius(64, 8.0, 1.5, 4) - 3.0).abs() < 1e-15);
    }
}
