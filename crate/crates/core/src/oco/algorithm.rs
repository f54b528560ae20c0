use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oco::ball::BallSet;
use crate::tensor::Tensor;

/// Divisor guard for the AdaGrad denominator.
pub const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Ogd,
    Adagrad,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Ogd => "ogd",
            AlgorithmKind::Adagrad => "adagrad",
        }
    }
}

/// An online algorithm for a convex decision set fed one gradient per round.
///
/// The nearly-convex reduction only ever hands the algorithm the gradient of a
/// linear surrogate, so this is the whole interface it needs.
pub trait OnlineAlgorithm {
    fn iterate(&self) -> &Tensor;
    /// Index of the round the current iterate is played in (starts at 1).
    fn round(&self) -> usize;
    fn decision_set(&self) -> &BallSet;
    fn update(&mut self, grad: &Tensor) -> Result<()>;
}

/// Projected OGD (`η_t = η₀ t^{-1/2}`) or diagonal AdaGrad on a [`BallSet`].
#[derive(Clone, Debug)]
pub struct OcoState {
    iterate: Tensor,
    round: usize,
    kind: AlgorithmKind,
    eta0: f64,
    sq_grad_sum: Option<Tensor>,
    set: BallSet,
}

impl OcoState {
    /// Starts at the center of `set` in round 1.
    pub fn new(kind: AlgorithmKind, set: BallSet, eta0: f64) -> Result<Self> {
        if !(eta0 >= 0.0 && eta0.is_finite()) {
            return Err(Error::invalid(format!("step size must be finite and >= 0, got {eta0}")));
        }
        let iterate = set.center().clone();
        let sq_grad_sum = match kind {
            AlgorithmKind::Adagrad => Some(Tensor::zeros(iterate.shape())),
            AlgorithmKind::Ogd => None,
        };
        Ok(OcoState {
            iterate,
            round: 1,
            kind,
            eta0,
            sq_grad_sum,
            set,
        })
    }

    pub fn ogd(set: BallSet, eta0: f64) -> Result<Self> {
        Self::new(AlgorithmKind::Ogd, set, eta0)
    }

    pub fn adagrad(set: BallSet, eta0: f64) -> Result<Self> {
        Self::new(AlgorithmKind::Adagrad, set, eta0)
    }

    /// Replace the iterate. It must already lie in the decision set.
    pub fn with_iterate(mut self, theta: Tensor) -> Result<Self> {
        self.set.center().check_shape(&theta)?;
        if !self.set.contains_within(&theta, 1e-12) {
            return Err(Error::invalid("initial iterate lies outside the decision set"));
        }
        self.iterate = theta;
        Ok(self)
    }

    pub fn with_round(mut self, round: usize) -> Result<Self> {
        if round == 0 {
            return Err(Error::invalid("rounds are numbered from 1"));
        }
        self.round = round;
        Ok(self)
    }

    pub fn kind(&self) -> AlgorithmKind {
        self.kind
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    /// Current OGD step `η₀ / √t`.
    pub fn step_size(&self) -> f64 {
        self.eta0 / (self.round as f64).sqrt()
    }

    pub fn squared_gradient_sum(&self) -> Option<&Tensor> {
        self.sq_grad_sum.as_ref()
    }

    pub fn into_iterate(self) -> Tensor {
        self.iterate
    }

    fn check_grad(&self, grad: &Tensor) -> Result<()> {
        self.iterate.check_shape(grad)?;
        if !grad.is_finite() {
            return Err(Error::NonFinite {
                round: self.round,
                what: "gradient".into(),
            });
        }
        Ok(())
    }

    pub fn ogd_step(&mut self, grad: &Tensor) -> Result<()> {
        if self.kind != AlgorithmKind::Ogd {
            return Err(Error::AlgorithmMismatch {
                expected: "ogd",
                actual: self.kind.name(),
            });
        }
        self.check_grad(grad)?;
        let eta = self.step_size();
        self.iterate.axpy(-eta, grad);
        self.finish_step()
    }

    pub fn adagrad_step(&mut self, grad: &Tensor) -> Result<()> {
        if self.kind != AlgorithmKind::Adagrad {
            return Err(Error::AlgorithmMismatch {
                expected: "adagrad",
                actual: self.kind.name(),
            });
        }
        self.check_grad(grad)?;
        let acc = self
            .sq_grad_sum
            .as_mut()
            .expect("adagrad state carries an accumulator");
        for ((theta, s), g) in self
            .iterate
            .as_mut_slice()
            .iter_mut()
            .zip(acc.as_mut_slice())
            .zip(grad.as_slice())
        {
            *s += g * g;
            *theta -= self.eta0 * g / (s.sqrt() + ADAGRAD_EPS);
        }
        self.finish_step()
    }

    fn finish_step(&mut self) -> Result<()> {
        if !self.iterate.is_finite() {
            return Err(Error::NonFinite {
                round: self.round,
                what: "iterate".into(),
            });
        }
        self.set.project_in_place(&mut self.iterate)?;
        self.round += 1;
        Ok(())
    }
}

impl OnlineAlgorithm for OcoState {
    fn iterate(&self) -> &Tensor {
        &self.iterate
    }

    fn round(&self) -> usize {
        self.round
    }

    fn decision_set(&self) -> &BallSet {
        &self.set
    }

    fn update(&mut self, grad: &Tensor) -> Result<()> {
        match self.kind {
            AlgorithmKind::Ogd => self.ogd_step(grad),
            AlgorithmKind::Adagrad => self.adagrad_step(grad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_set(r: f64) -> BallSet {
        BallSet::joint(Tensor::scalar(0.0), r).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = OcoState::ogd(scalar_set(10.0), 1.0).unwrap();
        s.ogd_step(&Tensor::scalar(0.0)).unwrap();
        assert_eq!(s.iterate().as_slice(), &[0.0]);
        assert_eq!(s.round(), 2);
    }

    #[test]
    fn step_uses_inverse_sqrt_schedule() {
        let mut s = OcoState::ogd(scalar_set(10.0), 1.0)
            .unwrap()
            .with_round(4)
            .unwrap();
        s.ogd_step(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(s.iterate().as_slice(), &[-0.5]);
    }

    #[test]
    fn projection_clips_large_steps() {
        let mut s = OcoState::ogd(scalar_set(2.0), 100.0).unwrap();
        s.ogd_step(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(s.iterate().as_slice(), &[-2.0]);
    }

    #[test]
    fn nonfinite_gradient_aborts() {
        let mut s = OcoState::ogd(scalar_set(2.0), 1.0).unwrap();
        let err = s.ogd_step(&Tensor::scalar(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { round: 1, .. }));
        let mut a = OcoState::adagrad(scalar_set(2.0), 1.0).unwrap();
        assert!(a.adagrad_step(&Tensor::scalar(f64::INFINITY)).is_err());
    }

    #[test]
    fn mismatched_algorithm_is_rejected() {
        let mut s = OcoState::ogd(scalar_set(2.0), 1.0).unwrap();
        assert!(matches!(
            s.adagrad_step(&Tensor::scalar(1.0)),
            Err(Error::AlgorithmMismatch { .. })
        ));
    }

    #[test]
    fn adagrad_first_step_is_nearly_sign() {
        let set = BallSet::joint(Tensor::zeros(&[3]), 100.0).unwrap();
        let mut s = OcoState::adagrad(set, 1.0).unwrap();
        let g = Tensor::vector(vec![0.3, -2.0, 5.0]);
        s.adagrad_step(&g).unwrap();
        for (theta, gi) in s.iterate().as_slice().iter().zip(g.as_slice()) {
            let expected = -gi / (gi.abs() + ADAGRAD_EPS);
            assert!((theta - expected).abs() < 1e-15);
            assert!((theta + gi.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn adagrad_zero_gradient_changes_nothing() {
        let set = BallSet::joint(Tensor::zeros(&[2]), 1.0).unwrap();
        let mut s = OcoState::adagrad(set, 1.0).unwrap();
        s.adagrad_step(&Tensor::zeros(&[2])).unwrap();
        assert_eq!(s.iterate().as_slice(), &[0.0, 0.0]);
        assert_eq!(s.squared_gradient_sum().unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn adagrad_second_step_is_shorter() {
        let set = BallSet::joint(Tensor::zeros(&[2]), 1e6).unwrap();
        let mut s = OcoState::adagrad(set, 0.5).unwrap();
        let g = Tensor::vector(vec![1.5, -0.25]);
        let x0 = s.iterate().clone();
        s.adagrad_step(&g).unwrap();
        let x1 = s.iterate().clone();
        s.adagrad_step(&g).unwrap();
        let x2 = s.iterate().clone();
        let first = x1.distance(&x0);
        let second = x2.distance(&x1);
        // |Δ₂| / |Δ₁| = 1/√2 per coordinate for repeated gradients
        assert!(second < first);
        assert!((second / first - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }
}
