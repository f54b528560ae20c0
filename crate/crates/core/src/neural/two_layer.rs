use std::path::Path;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::neural::{sha256_hex, Activation, InputCheck, Network};
use crate::rng::{gaussian, rng_from_seed, GENERATOR_ID};
use crate::tensor::{dot, Tensor};
use rand::Rng;

pub const TAG: &str = "two_layer";

/// Two-layer network `f_i(θ[i]; x) = (1/b) Σ_r a_{i,r} σ(θ[i,r]·x)` over `m`
/// hidden units, where units `r` and `r + m/2` share their initial row and
/// carry opposite output signs.
///
/// `θ` has shape `d × m × p`. Only the first-half signs are stored; the second
/// half is their negation.
#[derive(Clone, Debug)]
pub struct TwoLayerParams {
    p: usize,
    d: usize,
    m: usize,
    b: f64,
    activation: Activation,
    signs: Vec<f64>,
    theta: Tensor,
    theta_init: Tensor,
    seed: u64,
    input_check: InputCheck,
}

/// Symmetric initialization: first-half rows `N(0, I_p)`, second half copies,
/// signs uniform in `{±1}` and mirrored with a flip.
pub fn init_two_layer(
    p: usize,
    d: usize,
    m: usize,
    b: f64,
    activation: Activation,
    seed: u64,
) -> Result<TwoLayerParams> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::invalid(format!("hidden width must be even and >= 2, got {m}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::invalid(format!("scaling factor b must be positive, got {b}")));
    }
    if p == 0 || d == 0 {
        return Err(Error::invalid("input and output dimensions must be positive"));
    }
    let half = m / 2;
    let mut rng = rng_from_seed(seed);
    let mut theta = Tensor::zeros(&[d, m, p]);
    let mut signs = vec![0.0; d * half];
    for i in 0..d {
        let slice = theta.slice_mut(i);
        for r in 0..half {
            for j in 0..p {
                let v = gaussian(&mut rng);
                slice[r * p + j] = v;
                slice[(r + half) * p + j] = v;
            }
        }
        for r in 0..half {
            signs[i * half + r] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
    Ok(TwoLayerParams {
        p,
        d,
        m,
        b,
        activation,
        signs,
        theta_init: theta.clone(),
        theta,
        seed,
        input_check: InputCheck::Strict,
    })
}

impl TwoLayerParams {
    pub fn with_input_check(mut self, mode: InputCheck) -> Self {
        self.input_check = mode;
        self
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    /// First-half output signs `a_{i,r}`, `r < m/2`.
    pub fn half_signs(&self, i: usize) -> &[f64] {
        let half = self.m / 2;
        &self.signs[i * half..(i + 1) * half]
    }

    /// Output sign of hidden unit `r` in coordinate `i` (over all `m` units).
    pub fn sign(&self, i: usize, r: usize) -> f64 {
        let half = self.m / 2;
        if r < half {
            self.signs[i * half + r]
        } else {
            -self.signs[i * half + r - half]
        }
    }

    /// Row `r` of `θ[i]`.
    pub fn row<'a>(&self, theta: &'a Tensor, i: usize, r: usize) -> &'a [f64] {
        &theta.slice(i)[r * self.p..(r + 1) * self.p]
    }

    /// Overwrite the frozen signs. Used to build hand-constructed networks.
    pub fn set_half_signs(&mut self, i: usize, signs: &[f64]) -> Result<()> {
        let half = self.m / 2;
        if signs.len() != half || signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::invalid("signs must be ±1, one per first-half unit"));
        }
        self.signs[i * half..(i + 1) * half].copy_from_slice(signs);
        Ok(())
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
            .with_field("m", self.m)
            .with_field("depth", 1)
            .with_field("b", self.b)
            .with_field("activation", self.activation.tag())
            .with_field("seed", self.seed)
            .with_field("generator", GENERATOR_ID)
            .with_field("input_check", self.input_check)
            .with_tensor("theta", self.theta.clone())
            .with_tensor(
                "a",
                Tensor::from_vec(&[self.d, self.m / 2], self.signs.clone()).expect("sized"),
            )
            .with_tensor("theta_init", self.theta_init.clone())
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_tag(TAG)?;
        let tag: String = c.field("activation")?;
        let activation = Activation::from_tag(&tag)
            .ok_or_else(|| Error::Container(format!("unknown activation `{tag}`")))?;
        let p: usize = c.field("p")?;
        let d: usize = c.field("d")?;
        let m: usize = c.field("m")?;
        let theta = c.tensor("theta")?.clone();
        let theta_init = c.tensor("theta_init")?.clone();
        let signs = c.tensor("a")?.clone();
        if theta.shape() != [d, m, p] || theta_init.shape() != [d, m, p] || signs.shape() != [d, m / 2]
        {
            return Err(Error::Container("tensor shapes disagree with header".into()));
        }
        Ok(TwoLayerParams {
            p,
            d,
            m,
            b: c.field("b")?,
            activation,
            signs: signs.into_vec(),
            theta,
            theta_init,
            seed: c.field("seed")?,
            input_check: c.field("input_check")?,
        })
    }
}

impl Network for TwoLayerParams {
    fn arch(&self) -> &'static str {
        TAG
    }

    fn input_dim(&self) -> usize {
        self.p
    }

    fn output_dim(&self) -> usize {
        self.d
    }

    fn theta(&self) -> &Tensor {
        &self.theta
    }

    fn theta_init(&self) -> &Tensor {
        &self.theta_init
    }

    fn set_theta(&mut self, theta: Tensor) -> Result<()> {
        self.theta_init.check_shape(&theta)?;
        self.theta = theta;
        Ok(())
    }

    fn input_check(&self) -> InputCheck {
        self.input_check
    }

    fn forward_unchecked(&self, theta: &Tensor, x: &[f64]) -> Vec<f64> {
        let half = self.m / 2;
        (0..self.d)
            .map(|i| {
                let slice = theta.slice(i);
                let signs = self.half_signs(i);
                let mut acc = 0.0;
                for r in 0..half {
                    let first = self.activation.value(dot(&slice[r * self.p..(r + 1) * self.p], x));
                    let second = self
                        .activation
                        .value(dot(&slice[(r + half) * self.p..(r + half + 1) * self.p], x));
                    acc += signs[r] * (first - second);
                }
                acc / self.b
            })
            .collect()
    }

    fn backward_unchecked(&self, theta: &Tensor, x: &[f64], upstream: &[f64]) -> Tensor {
        let mut grad = Tensor::zeros(theta.shape());
        for i in 0..self.d {
            let u = upstream[i];
            if u == 0.0 {
                continue;
            }
            let rows = theta.slice(i);
            let out = grad.slice_mut(i);
            for r in 0..self.m {
                let row = &rows[r * self.p..(r + 1) * self.p];
                let coef = u * self.sign(i, r) * self.activation.derivative(dot(row, x)) / self.b;
                for (g, xj) in out[r * self.p..(r + 1) * self.p].iter_mut().zip(x) {
                    *g = coef * xj;
                }
            }
        }
        grad
    }

    fn frozen_checksum(&self) -> String {
        sha256_hex(&[&self.signs, &[self.b]])
    }
}
