use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::dynamics::LtvEpisode;
use crate::error::{Error, Result};

/// Constants of sequential stability: every product of `n` consecutive
/// closed-loop transition matrices has operator norm at most `C₁ ρⁿ`, and
/// every input matrix at most `C₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub c1: f64,
    pub rho: f64,
    pub c2: f64,
}

impl Certificate {
    pub fn new(c1: f64, rho: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 1.0 && (0.0..1.0).contains(&rho) && c2 >= 1.0) {
            return Err(Error::invalid(format!(
                "certificate needs C1 >= 1, 0 <= rho < 1, C2 >= 1; got ({c1}, {rho}, {c2})"
            )));
        }
        Ok(Certificate { c1, rho, c2 })
    }

    /// `C₁ / (1 − ρ)`
    pub fn state_gain(&self) -> f64 {
        self.c1 / (1.0 - self.rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `‖A_k ⋯ A_{k−n+1}‖ = norm > bound`
    Product { k: usize, n: usize, norm: f64, bound: f64 },
    /// `‖B_k‖ = norm > bound`
    Input { k: usize, norm: f64, bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub pass: bool,
    pub products_checked: usize,
    /// `(k, n)` maximizing `‖A_k ⋯ A_{k−n+1}‖ / (C₁ ρⁿ)`.
    pub worst_product: (usize, usize),
    pub worst_product_ratio: f64,
    /// `k` maximizing `‖B_k‖`.
    pub worst_input: usize,
    pub max_input_norm: f64,
    pub witness: Option<Witness>,
}

/// Largest singular value.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

const REL_SLACK: f64 = 1e-12;

/// Check every product `A'_k ⋯ A'_{k−n+1}` for `1 ≤ n ≤ k ≤ K` and every
/// `‖B_k‖`, where `A'` is the closed-loop matrix.
pub fn check_sequential_stability(episode: &LtvEpisode, cert: &Certificate) -> StabilityReport {
    let horizon = episode.horizon();
    let a: Vec<DMatrix<f64>> = (1..=horizon).map(|k| episode.closed_loop_a(k)).collect();
    let mut worst_product = (1, 1);
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut witness = None;
    let mut checked = 0;
    for k in 1..=horizon {
        let mut prod = a[k - 1].clone();
        for n in 1..=k {
            if n > 1 {
                prod = &prod * &a[k - n];
            }
            checked += 1;
            let nrm = op_norm(&prod);
            let bound = cert.c1 * cert.rho.powi(n as i32);
            let ratio = if bound > 0.0 {
                nrm / bound
            } else if nrm > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_product = (k, n);
            }
            if witness.is_none() && nrm > bound * (1.0 + REL_SLACK) {
                witness = Some(Witness::Product { k, n, norm: nrm, bound });
            }
        }
    }
    let mut worst_input = 1;
    let mut max_input = 0.0;
    for (idx, b) in episode.b.iter().enumerate() {
        let nrm = op_norm(b);
        if nrm > max_input {
            max_input = nrm;
            worst_input = idx + 1;
        }
        if witness.is_none() && nrm > cert.c2 * (1.0 + REL_SLACK) {
            witness = Some(Witness::Input {
                k: idx + 1,
                norm: nrm,
                bound: cert.c2,
            });
        }
    }
    StabilityReport {
        pass: witness.is_none(),
        products_checked: checked,
        worst_product,
        worst_product_ratio: worst_ratio,
        worst_input,
        max_input_norm: max_input,
        witness,
    }
}

/// Attach `cert` to the episode if it verifies.
pub fn certify(episode: &mut LtvEpisode, cert: Certificate) -> StabilityReport {
    let report = check_sequential_stability(episode, &cert);
    episode.certificate = report.pass.then_some(cert);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::dynamics::CostSpec;
    use crate::rng::{gaussian_vec, rng_from_seed};

    fn episode(a: Vec<DMatrix<f64>>, b: DMatrix<f64>) -> LtvEpisode {
        let k = a.len();
        let dx = a[0].nrows();
        LtvEpisode::new(vec![0.0; dx], a, vec![b; k], vec![vec![0.0; dx]; k], CostSpec::Zero, 1.0)
            .unwrap()
    }

    #[test]
    fn scaled_identity_passes_exactly() {
        let ep = episode(vec![DMatrix::identity(2, 2) * 0.9; 6], DMatrix::identity(2, 1));
        let rep = check_sequential_stability(&ep, &Certificate::new(1.0, 0.9, 1.0).unwrap());
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.products_checked, 21);
        assert!((rep.worst_product_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expansive_step_gives_witness() {
        let mut a = vec![DMatrix::identity(2, 2) * 0.5; 4];
        a[2] = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.1]);
        let ep = episode(a, DMatrix::identity(2, 1));
        let rep = check_sequential_stability(&ep, &Certificate::new(1.0, 0.99, 1.0).unwrap());
        assert!(!rep.pass);
        assert!(matches!(rep.witness, Some(Witness::Product { k: 3, n: 1, .. })));
        assert_eq!(rep.worst_product, (3, 1));
    }

    #[test]
    fn input_norm_violation() {
        let ep = episode(vec![DMatrix::identity(1, 1) * 0.5; 2], DMatrix::from_element(1, 1, 3.0));
        let rep = check_sequential_stability(&ep, &Certificate::new(1.0, 0.5, 2.0).unwrap());
        assert!(matches!(rep.witness, Some(Witness::Input { k: 1, .. })));
    }

    #[test]
    fn agrees_with_direct_norms() {
        let mut rng = rng_from_seed(12);
        for trial in 0..20 {
            let a: Vec<DMatrix<f64>> = (0..5)
                .map(|_| DMatrix::from_vec(3, 3, gaussian_vec(&mut rng, 9)) * 0.3)
                .collect();
            let ep = episode(a.clone(), DMatrix::identity(3, 1));
            let cert = Certificate::new(1.5, 0.8, 1.0).unwrap();
            let mut expected = true;
            for k in 0..5 {
                for n in 1..=k + 1 {
                    let mut p = DMatrix::<f64>::identity(3, 3);
                    for j in (k + 1 - n..=k).rev() {
                        p = p * &a[j];
                    }
                    // power iteration on pᵀp as an independent norm oracle
                    let pt = p.transpose() * &p;
                    let mut v = nalgebra::DVector::from_element(3, 1.0);
                    for _ in 0..500 {
                        v = &pt * &v;
                        v /= v.norm();
                    }
                    let nrm = (v.dot(&(&pt * &v))).sqrt();
                    if nrm > 1.5 * 0.8f64.powi(n as i32) * (1.0 + 1e-9) {
                        expected = false;
                    }
                }
            }
            assert_eq!(check_sequential_stability(&ep, &cert).pass, expected, "trial {trial}");
        }
    }

    #[test]
    fn certificate_validation() {
        assert!(Certificate::new(0.5, 0.5, 1.0).is_err());
        assert!(Certificate::new(1.0, 1.0, 1.0).is_err());
        assert!(Certificate::new(1.0, 0.5, 0.5).is_err());
        assert!((Certificate::new(2.0, 0.5, 1.0).unwrap().state_gain() - 4.0).abs() < 1e-15);
    }
}
