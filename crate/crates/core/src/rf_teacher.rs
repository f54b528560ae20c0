//! Random-feature teachers `g_i(x) = Σ_r c_{i,r}·x σ'(w_{i,r}·x)` and a
//! Monte-Carlo estimate of the two-layer neural tangent kernel.

use std::path::Path;

use rand_distr::{Distribution, Uniform};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::neural::{check_unit_input, Activation, InputCheck, Network, TwoLayerParams};
use crate::rng::{gaussian, rng_from_seed, unit_vector, GENERATOR_ID};
use crate::tensor::{dot, Tensor};

pub const TAG: &str = "rf_teacher";

/// Relative slack when checking stored coefficients against the bound.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct RfTeacher {
    p: usize,
    d: usize,
    m_rf: usize,
    rf_norm: f64,
    activation: Activation,
    /// `d × m_rf × p`
    features: Tensor,
    /// `d × m_rf × p`
    coefs: Tensor,
    seed: u64,
}

/// Where the teacher's feature weights come from.
#[derive(Clone, Copy, Debug)]
pub enum FeatureSource<'a> {
    /// Fresh `N(0, I_p)` draws.
    Gaussian,
    /// The first-half initialization rows of a two-layer student, so that the
    /// teacher is exactly the student's linearization at some θ*.
    Student(&'a TwoLayerParams),
}

/// Largest coefficient norm accepted on construction or load: `2D/m_rf`.
pub fn coefficient_bound(rf_norm: f64, m_rf: usize) -> f64 {
    2.0 * rf_norm / m_rf as f64
}

/// Norm scale used when sampling: `D/m_rf`. Equal to `2D/m` for a student
/// of width `m = 2 m_rf`, which keeps the constructive comparator inside the
/// ball of radius `b D √d / √m`.
pub fn sampling_bound(rf_norm: f64, m_rf: usize) -> f64 {
    rf_norm / m_rf as f64
}

/// Sample a teacher with Gaussian features.
pub fn sample_teacher(
    p: usize,
    d: usize,
    rf_norm: f64,
    m_rf: usize,
    seed: u64,
    activation: Activation,
) -> Result<RfTeacher> {
    sample_teacher_with(p, d, rf_norm, m_rf, seed, activation, FeatureSource::Gaussian)
}

/// Sample a teacher whose features are the given student's initialization
/// rows. `m_rf` is `m/2` and the activation is the student's.
pub fn sample_teacher_for_student(
    student: &TwoLayerParams,
    rf_norm: f64,
    seed: u64,
) -> Result<RfTeacher> {
    sample_teacher_with(
        student.p(),
        student.d(),
        rf_norm,
        student.m() / 2,
        seed,
        student.activation().clone(),
        FeatureSource::Student(student),
    )
}

/// Each `c_{i,r}` has norm `ρ D/m_rf` with `ρ ~ U[0, 1]` and a uniformly random
/// direction.
pub fn sample_teacher_with(
    p: usize,
    d: usize,
    rf_norm: f64,
    m_rf: usize,
    seed: u64,
    activation: Activation,
    source: FeatureSource<'_>,
) -> Result<RfTeacher> {
    if !(rf_norm >= 0.0 && rf_norm.is_finite()) {
        return Err(Error::invalid(format!("RF-norm bound must be >= 0, got {rf_norm}")));
    }
    if m_rf == 0 || p == 0 || d == 0 {
        return Err(Error::invalid("m_rf, p and d must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let features = match source {
        FeatureSource::Gaussian => {
            let mut t = Tensor::zeros(&[d, m_rf, p]);
            t.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = gaussian(&mut rng));
            t
        }
        FeatureSource::Student(s) => {
            if s.p() != p || s.d() != d || s.m() != 2 * m_rf {
                return Err(Error::invalid(
                    "student shape does not match the requested teacher (need m = 2 m_rf)",
                ));
            }
            let init = s.theta_init();
            let mut t = Tensor::zeros(&[d, m_rf, p]);
            for i in 0..d {
                t.slice_mut(i).copy_from_slice(&init.slice(i)[..m_rf * p]);
            }
            t
        }
    };
    let scale = sampling_bound(rf_norm, m_rf);
    let unit = Uniform::new_inclusive(0.0, 1.0).expect("valid range");
    let mut coefs = Tensor::zeros(&[d, m_rf, p]);
    for row in coefs.as_mut_slice().chunks_exact_mut(p) {
        let rho: f64 = unit.sample(&mut rng);
        let dir = unit_vector(&mut rng, p);
        for (c, u) in row.iter_mut().zip(dir) {
            *c = rho * scale * u;
        }
    }
    RfTeacher::from_parts(rf_norm, activation, features, coefs, seed)
}

impl RfTeacher {
    /// Build from explicit tensors, both shaped `d × m_rf × p`. Fails if any
    /// coefficient exceeds `2D/m_rf`.
    pub fn from_parts(
        rf_norm: f64,
        activation: Activation,
        features: Tensor,
        coefs: Tensor,
        seed: u64,
    ) -> Result<Self> {
        let [d, m_rf, p] = <[usize; 3]>::try_from(features.shape())
            .map_err(|_| Error::invalid("teacher features must be d × m_rf × p"))?;
        features.check_shape(&coefs)?;
        if activation.smoothness_constant().is_none() && activation != Activation::Relu {
            return Err(Error::invalid("unsupported activation"));
        }
        let bound = coefficient_bound(rf_norm, m_rf);
        for (k, row) in coefs.as_slice().chunks_exact(p).enumerate() {
            let n = crate::tensor::norm(row);
            if n > bound * (1.0 + BOUND_SLACK) {
                return Err(Error::invalid(format!(
                    "coefficient {k} has norm {n}, above the bound {bound}"
                )));
            }
        }
        Ok(RfTeacher {
            p,
            d,
            m_rf,
            rf_norm,
            activation,
            features,
            coefs,
            seed,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m_rf(&self) -> usize {
        self.m_rf
    }

    pub fn rf_norm(&self) -> f64 {
        self.rf_norm
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn coefs(&self) -> &Tensor {
        &self.coefs
    }

    /// Same features, every coefficient multiplied by `lambda`. The norm bound
    /// is scaled by `|lambda|` so the result stays valid.
    pub fn scaled(&self, lambda: f64) -> RfTeacher {
        let mut out = self.clone();
        out.coefs.scale(lambda);
        out.rf_norm *= lambda.abs();
        out
    }

    /// Evaluate `g(x)`; `x` must have unit norm.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                context: "teacher input",
                expected: self.p,
                actual: x.len(),
            });
        }
        check_unit_input(x, InputCheck::Strict)?;
        Ok(self.eval_unchecked(x))
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let p = self.p;
        (0..self.d)
            .map(|i| {
                let w = self.features.slice(i);
                let c = self.coefs.slice(i);
                (0..self.m_rf)
                    .map(|r| {
                        let s = r * p..(r + 1) * p;
                        dot(&c[s.clone()], x) * self.activation.derivative(dot(&w[s], x))
                    })
                    .sum()
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    pub fn to_container(&self) -> Container {
        Container::new(TAG)
            .with_field("p", self.p)
            .with_field("d", self.d)
            .with_field("m_rf", self.m_rf)
            .with_field("rf_norm", self.rf_norm)
            .with_field("activation", self.activation.tag())
            .with_field("seed", self.seed)
            .with_field("generator", GENERATOR_ID)
            .with_tensor("features", self.features.clone())
            .with_tensor("coefs", self.coefs.clone())
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_tag(TAG)?;
        let tag: String = c.field("activation")?;
        let activation = Activation::from_tag(&tag)
            .ok_or_else(|| Error::Container(format!("unknown activation `{tag}`")))?;
        let t = RfTeacher::from_parts(
            c.field("rf_norm")?,
            activation,
            c.tensor("features")?.clone(),
            c.tensor("coefs")?.clone(),
            c.field("seed")?,
        )
        .map_err(|e| Error::Container(e.to_string()))?;
        if (t.p, t.d, t.m_rf) != (c.field("p")?, c.field("d")?, c.field("m_rf")?) {
            return Err(Error::Container("tensor shapes disagree with header".into()));
        }
        Ok(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NtkEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Monte-Carlo estimate of `E_w[(x·y) σ'(w·x) σ'(w·y)]`, `w ~ N(0, I_p)`.
pub fn ntk_estimate(
    x: &[f64],
    y: &[f64],
    activation: &Activation,
    n_samples: usize,
    seed: u64,
) -> Result<NtkEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel arguments",
            expected: x.len(),
            actual: y.len(),
        });
    }
    let xy = dot(x, y);
    let mut rng = rng_from_seed(seed);
    let mut w = vec![0.0; x.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        w.iter_mut().for_each(|v| *v = gaussian(&mut rng));
        let s = xy * activation.derivative(dot(&w, x)) * activation.derivative(dot(&w, y));
        sum += s;
        sum_sq += s * s;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(NtkEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_two_layer;

    #[test]
    fn zero_norm_teacher_is_zero() {
        let t = sample_teacher(4, 2, 0.0, 8, 1, Activation::Tanh).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..10 {
            let x = unit_vector(&mut rng, 4);
            assert_eq!(t.eval(&x).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_teacher(3, 2, 1.0, 5, 9, Activation::Tanh).unwrap();
        let b = sample_teacher(3, 2, 1.0, 5, 9, Activation::Tanh).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.coefs(), b.coefs());
    }

    #[test]
    fn sampled_coefficients_respect_bounds() {
        let t = sample_teacher(6, 3, 2.5, 10, 4, Activation::Tanh).unwrap();
        for row in t.coefs().as_slice().chunks_exact(6) {
            assert!(crate::tensor::norm(row) <= sampling_bound(2.5, 10) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn single_feature_hand_value() {
        let d_norm = 0.7;
        let w = Tensor::from_vec(&[1, 1, 3], vec![0.3, -1.2, 0.4]).unwrap();
        let c = Tensor::from_vec(&[1, 1, 3], vec![2.0 * d_norm, 0.0, 0.0]).unwrap();
        let t = RfTeacher::from_parts(d_norm, Activation::Tanh, w, c, 0).unwrap();
        let g = t.eval(&[1.0, 0.0, 0.0]).unwrap();
        let expected = 2.0 * d_norm * (1.0 - 0.3f64.tanh().powi(2));
        assert!((g[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn oversized_coefficients_rejected() {
        let w = Tensor::zeros(&[1, 2, 2]);
        let c = Tensor::from_vec(&[1, 2, 2], vec![1.1, 0.0, 0.0, 0.0]).unwrap();
        assert!(RfTeacher::from_parts(1.0, Activation::Tanh, w, c, 0).is_err());
    }

    #[test]
    fn non_unit_input_rejected() {
        let t = sample_teacher(2, 1, 1.0, 2, 0, Activation::Tanh).unwrap();
        assert!(matches!(t.eval(&[1.0, 1.0]), Err(Error::NonUnitInput { .. })));
    }

    #[test]
    fn linear_in_coefficients() {
        let t = sample_teacher(5, 2, 1.0, 7, 3, Activation::Tanh).unwrap();
        let s = t.scaled(-2.5);
        let mut rng = rng_from_seed(6);
        for _ in 0..10 {
            let x = unit_vector(&mut rng, 5);
            for (a, b) in t.eval(&x).unwrap().iter().zip(s.eval(&x).unwrap()) {
                assert!((b + 2.5 * a).abs() <= 1e-14 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn student_features_are_init_rows() {
        let net = init_two_layer(4, 2, 6, 2.0, Activation::Tanh, 8).unwrap();
        let t = sample_teacher_for_student(&net, 1.0, 1).unwrap();
        for i in 0..2 {
            assert_eq!(t.features().slice(i), &net.theta_init().slice(i)[..12]);
        }
        let wrong = init_two_layer(4, 2, 6, 2.0, Activation::Tanh, 8).unwrap();
        assert!(sample_teacher_with(4, 2, 1.0, 2, 0, Activation::Tanh, FeatureSource::Student(&wrong)).is_err());
    }

    #[test]
    fn container_round_trip() {
        let t = sample_teacher(3, 2, 1.0, 4, 5, Activation::Tanh).unwrap();
        let back =
            RfTeacher::from_container(&Container::from_bytes(&t.to_container().to_bytes()).unwrap())
                .unwrap();
        assert_eq!(back.coefs(), t.coefs());
        assert_eq!(back.features(), t.features());
        assert_eq!(back.rf_norm().to_bits(), t.rf_norm().to_bits());
    }

    #[test]
    fn ntk_diagonal_and_orthogonal() {
        let x = [0.6, 0.8, 0.0];
        let k = ntk_estimate(&x, &x, &Activation::Relu, 100_000, 1).unwrap();
        assert!((k.estimate - 0.5).abs() <= 3.0 * k.std_error);
        let y = [0.0, 0.0, 1.0];
        assert_eq!(ntk_estimate(&x, &y, &Activation::Relu, 1000, 1).unwrap().estimate, 0.0);
    }

    #[test]
    fn ntk_is_symmetric() {
        let mut rng = rng_from_seed(4);
        let x = unit_vector(&mut rng, 4);
        let y = unit_vector(&mut rng, 4);
        let a = ntk_estimate(&x, &y, &Activation::Tanh, 2000, 7).unwrap();
        let b = ntk_estimate(&y, &x, &Activation::Tanh, 2000, 7).unwrap();
        assert_eq!(a, b);
        assert!(ntk_estimate(&x, &y, &Activation::Tanh, 0, 7).is_err());
    }
}
