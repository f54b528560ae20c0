//! Online nearly-convex optimization: play the iterate, linearize the loss at
//! it, and hand the linear surrogate's gradient to any online algorithm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oco::algorithm::OnlineAlgorithm;
use crate::oco::ball::BallSet;
use crate::oco::regret::RegretTrace;
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

/// Value and gradient of a loss at one parameter point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Tensor,
    /// Gradient with respect to the network output, when the loss factors
    /// through one.
    pub output_grad: Option<Vec<f64>>,
}

impl Evaluation {
    pub fn new(value: f64, grad: Tensor) -> Self {
        Evaluation {
            value,
            grad,
            output_grad: None,
        }
    }
}

pub trait LossOracle {
    fn evaluate(&self, theta: &Tensor) -> Result<Evaluation>;

    fn value(&self, theta: &Tensor) -> Result<f64> {
        self.evaluate(theta).map(|e| e.value)
    }

    /// The round's input, if the loss is `ℓ(f(θ; x))` for some `x`.
    fn input(&self) -> Option<&[f64]> {
        None
    }
}

impl<T: LossOracle + ?Sized> LossOracle for &T {
    fn evaluate(&self, theta: &Tensor) -> Result<Evaluation> {
        (**self).evaluate(theta)
    }

    fn value(&self, theta: &Tensor) -> Result<f64> {
        (**self).value(theta)
    }

    fn input(&self) -> Option<&[f64]> {
        (**self).input()
    }
}

impl<T: LossOracle + ?Sized> LossOracle for Box<T> {
    fn evaluate(&self, theta: &Tensor) -> Result<Evaluation> {
        (**self).evaluate(theta)
    }

    fn value(&self, theta: &Tensor) -> Result<f64> {
        (**self).value(theta)
    }

    fn input(&self) -> Option<&[f64]> {
        (**self).input()
    }
}

/// Adapts a closure returning `(value, gradient)`.
pub struct FnOracle<F>(pub F);

impl<F> LossOracle for FnOracle<F>
where
    F: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    fn evaluate(&self, theta: &Tensor) -> Result<Evaluation> {
        let (value, grad) = (self.0)(theta)?;
        Ok(Evaluation::new(value, grad))
    }
}

/// `h(θ) = ℓ(θ_t) + ⟨∇ℓ(θ_t), θ − θ_t⟩`
#[derive(Clone, Debug)]
pub struct Linearization {
    pub anchor: Tensor,
    pub value: f64,
    pub grad: Tensor,
}

impl Linearization {
    pub fn evaluate(&self, theta: &Tensor) -> f64 {
        self.value + self.grad.dot(&theta.sub(&self.anchor))
    }

    /// Constant in θ, which is why the inner algorithm sees linear losses.
    pub fn gradient(&self) -> &Tensor {
        &self.grad
    }
}

/// One round as observed by the reduction.
#[derive(Clone, Debug)]
pub struct LossEvent<'a> {
    pub round: usize,
    pub input: Option<&'a [f64]>,
    pub played: &'a Tensor,
    pub value: f64,
    pub grad: &'a Tensor,
    pub output_grad: Option<&'a [f64]>,
    pub surrogate: &'a Linearization,
}

#[derive(Debug, thiserror::Error)]
#[error("run aborted at round {round}: {source}")]
pub struct RunFailure {
    pub round: usize,
    /// Records for rounds `1..round`.
    pub partial: RegretTrace,
    #[source]
    pub source: Error,
}

/// Drive `algorithm` over `stream` through the linearization reduction.
///
/// `observe` is called once per completed round, before the algorithm moves.
pub fn run_nearly_convex<A, I, O, F>(
    algorithm: &mut A,
    stream: I,
    mut observe: F,
) -> std::result::Result<RegretTrace, RunFailure>
where
    A: OnlineAlgorithm + ?Sized,
    I: IntoIterator<Item = O>,
    O: LossOracle,
    F: FnMut(&LossEvent<'_>),
{
    let mut trace = RegretTrace::new();
    for (idx, oracle) in stream.into_iter().enumerate() {
        let round = idx + 1;
        let fail = |trace: RegretTrace, source: Error| RunFailure {
            round,
            partial: trace,
            source,
        };
        let played = algorithm.iterate().clone();
        let eval = match oracle.evaluate(&played) {
            Ok(e) => e,
            Err(e) => return Err(fail(trace, e)),
        };
        if !eval.value.is_finite() {
            return Err(fail(
                trace,
                Error::NonFinite {
                    round,
                    what: "loss value".into(),
                },
            ));
        }
        let surrogate = Linearization {
            anchor: played.clone(),
            value: eval.value,
            grad: eval.grad,
        };
        observe(&LossEvent {
            round,
            input: oracle.input(),
            played: &played,
            value: eval.value,
            grad: &surrogate.grad,
            output_grad: eval.output_grad.as_deref(),
            surrogate: &surrogate,
        });
        trace.push_loss(eval.value);
        if let Err(e) = algorithm.update(surrogate.gradient()) {
            let e = match e {
                Error::NonFinite { what, .. } => Error::NonFinite { round, what },
                other => other,
            };
            return Err(fail(trace, e));
        }
    }
    Ok(trace)
}

/// How verification pairs are drawn from the decision set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSampling {
    /// Exact uniform sampling from the set.
    UniformBall,
    /// Both points at distance `r` from the center, cycling through the radii.
    Spheres(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NearConvexityReport {
    pub epsilon: f64,
    pub n_pairs: usize,
    pub sampling: PairSampling,
    /// Largest `ℓ(y) + ⟨∇ℓ(y), x − y⟩ − ℓ(x)` over the sampled pairs.
    pub max_gap: f64,
    /// `max(0, max_gap − ε)`.
    pub max_violation: f64,
    pub pass: bool,
}

/// Slack allowed on top of ε when judging a pair.
pub const NEAR_CONVEX_SLACK: f64 = 1e-8;

pub fn verify_nearly_convex<O: LossOracle + ?Sized>(
    oracle: &O,
    set: &BallSet,
    epsilon: f64,
    n_pairs: usize,
    seed: u64,
    sampling: PairSampling,
) -> Result<NearConvexityReport> {
    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs must be at least 1"));
    }
    if let PairSampling::Spheres(radii) = &sampling {
        if radii.is_empty() {
            return Err(Error::invalid("sphere sampling needs at least one radius"));
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut max_gap = f64::NEG_INFINITY;
    for k in 0..n_pairs {
        let (x, y) = sample_pair(&mut rng, set, &sampling, k);
        let gap = convexity_gap(oracle, &x, &y)?;
        max_gap = max_gap.max(gap);
    }
    let max_violation = (max_gap - epsilon).max(0.0);
    Ok(NearConvexityReport {
        epsilon,
        n_pairs,
        sampling,
        max_gap,
        max_violation,
        pass: max_gap <= epsilon + NEAR_CONVEX_SLACK,
    })
}

/// `ℓ(y) + ⟨∇ℓ(y), x − y⟩ − ℓ(x)`, which ε must dominate.
pub fn convexity_gap<O: LossOracle + ?Sized>(oracle: &O, x: &Tensor, y: &Tensor) -> Result<f64> {
    let at_y = oracle.evaluate(y)?;
    let at_x = oracle.value(x)?;
    Ok(at_y.value + at_y.grad.dot(&x.sub(y)) - at_x)
}

fn sample_pair<R: Rng + ?Sized>(
    rng: &mut R,
    set: &BallSet,
    sampling: &PairSampling,
    k: usize,
) -> (Tensor, Tensor) {
    match sampling {
        PairSampling::UniformBall => (set.sample_uniform(rng), set.sample_uniform(rng)),
        PairSampling::Spheres(radii) => {
            let r = radii[k % radii.len()];
            (set.sample_on_sphere(rng, r), set.sample_on_sphere(rng, r))
        }
    }
}
