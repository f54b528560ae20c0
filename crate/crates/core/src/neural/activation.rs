use std::fmt;
use std::sync::Arc;

/// A user-supplied smooth activation. `constant` must bound both `|σ'|` and
/// the Lipschitz constant of `σ'`.
pub trait SmoothActivation: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, z: f64) -> f64;
    fn derivative(&self, z: f64) -> f64;
    fn constant(&self) -> f64;
}

#[derive(Clone)]
pub enum Activation {
    /// `|tanh'| ≤ 1` and `|tanh''| ≤ 4/(3√3) < 1`, so C = 1.
    Tanh,
    /// Derivative convention at the kink: `σ'(0) = 0`.
    Relu,
    Custom(Arc<dyn SmoothActivation>),
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl PartialEq for Activation {
    fn eq(&self, other: &Self) -> bool {
        self.tag() == other.tag()
    }
}

impl Activation {
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    pub fn tag(&self) -> &str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Custom(a) => a.name(),
        }
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Custom(a) => a.value(z),
        }
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Custom(a) => a.derivative(z),
        }
    }

    /// The constant C with `|σ'| ≤ C` and `σ'` C-Lipschitz; `None` for ReLU,
    /// whose derivative is discontinuous.
    pub fn smoothness_constant(&self) -> Option<f64> {
        match self {
            Activation::Tanh => Some(1.0),
            Activation::Relu => None,
            Activation::Custom(a) => Some(a.constant()),
        }
    }
}

/// Dense-grid check of the declared constant over `[-10, 10]`.
///
/// Returns the worst observed `|σ'|` and the worst difference quotient of
/// `σ'` between neighbouring grid points.
pub fn grid_constants(act: &Activation, n: usize) -> (f64, f64) {
    let h = 20.0 / n as f64;
    let mut max_deriv: f64 = 0.0;
    let mut max_quot: f64 = 0.0;
    let mut prev = act.derivative(-10.0);
    max_deriv = max_deriv.max(prev.abs());
    for k in 1..=n {
        let z = -10.0 + k as f64 * h;
        let d = act.derivative(z);
        max_deriv = max_deriv.max(d.abs());
        max_quot = max_quot.max((d - prev).abs() / h);
        prev = d;
    }
    (max_deriv, max_quot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_constant_certified_on_grid() {
        let (d, q) = grid_constants(&Activation::Tanh, 200_000);
        let c = Activation::Tanh.smoothness_constant().unwrap();
        assert!(d <= c);
        assert!(q <= c);
        // sup |tanh''| = 4/(3√3)
        assert!((q - 4.0 / (3.0 * 3f64.sqrt())).abs() < 1e-3);
    }

    #[test]
    fn relu_has_zero_subgradient_at_kink() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300), 1.0);
        assert!(Activation::Relu.smoothness_constant().is_none());
    }

    struct Softplus;
    impl SmoothActivation for Softplus {
        fn name(&self) -> &str {
            "softplus"
        }
        fn value(&self, z: f64) -> f64 {
            z.exp().ln_1p()
        }
        fn derivative(&self, z: f64) -> f64 {
            1.0 / (1.0 + (-z).exp())
        }
        fn constant(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn custom_activation_is_checkable() {
        let act = Activation::Custom(Arc::new(Softplus));
        let (d, q) = grid_constants(&act, 100_000);
        assert!(d <= 1.0 && q <= 0.25 + 1e-6);
        assert_eq!(act.tag(), "softplus");
    }
}
