use std::path::Path;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::neural::{sha256_hex, InputCheck, Network};
use crate::rng::{gaussian, rng_from_seed, GENERATOR_ID};
use crate::tensor::{dot, Tensor};

pub const TAG: &str = "deep";

/// Depth-`H` ReLU network, one scalar subnetwork per output coordinate:
/// `x⁰ = A x`, `xʰ = relu(θ[i,h] xʰ⁻¹)`, `f_i = a_i · xᴴ`.
///
/// `A` (`m × p`) is shared by every coordinate, `a` (`d × m`) is independent
/// per coordinate, and `θ` has shape `d × H × m × m`.
#[derive(Clone, Debug)]
pub struct DeepParams {
    p: usize,
    d: usize,
    m: usize,
    depth: usize,
    input_map: Tensor,
    readout: Tensor,
    theta: Tensor,
    theta_init: Tensor,
    seed: u64,
    input_check: InputCheck,
}

/// Entries of `A` and every `θʰ` from `N(0, 2/m)`, entries of `a` from `N(0, 1)`.
pub fn init_deep(p: usize, d: usize, m: usize, depth: usize, seed: u64) -> Result<DeepParams> {
    if p == 0 || d == 0 || m == 0 || depth == 0 {
        return Err(Error::invalid("p, d, m and depth must all be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let std = (2.0 / m as f64).sqrt();
    let mut input_map = Tensor::zeros(&[m, p]);
    input_map
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = std * gaussian(&mut rng));
    let mut readout = Tensor::zeros(&[d, m]);
    readout
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = gaussian(&mut rng));
    let mut theta = Tensor::zeros(&[d, depth, m, m]);
    theta
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = std * gaussian(&mut rng));
    Ok(DeepParams {
        p,
        d,
        m,
        depth,
        input_map,
        readout,
        theta_init: theta.clone(),
        theta,
        seed,
        input_check: InputCheck::Strict,
    })
}

struct Trace {
    /// `x⁰, …, xᴴ`
    acts: Vec<Vec<f64>>,
    /// pre-activations of layers `1..=H`
    pre: Vec<Vec<f64>>,
}

impl DeepParams {
    /// Build from explicit tensors; `θ` becomes both the current iterate and
    /// the initialization snapshot.
    pub fn from_parts(
        input_map: Tensor,
        readout: Tensor,
        theta: Tensor,
        seed: u64,
    ) -> Result<Self> {
        let [m, p] = <[usize; 2]>::try_from(input_map.shape())
            .map_err(|_| Error::invalid("input map must be m × p"))?;
        let [d, m2] = <[usize; 2]>::try_from(readout.shape())
            .map_err(|_| Error::invalid("readout must be d × m"))?;
        let [d2, depth, m3, m4] = <[usize; 4]>::try_from(theta.shape())
            .map_err(|_| Error::invalid("theta must be d × H × m × m"))?;
        if m2 != m || m3 != m || m4 != m || d2 != d || depth == 0 || p == 0 {
            return Err(Error::invalid("inconsistent deep-network shapes"));
        }
        Ok(DeepParams {
            p,
            d,
            m,
            depth,
            input_map,
            readout,
            theta_init: theta.clone(),
            theta,
            seed,
            input_check: InputCheck::Strict,
        })
    }

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

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_map(&self) -> &Tensor {
        &self.input_map
    }

    pub fn readout(&self) -> &Tensor {
        &self.readout
    }

    fn layer<'a>(&self, theta: &'a Tensor, i: usize, h: usize) -> &'a [f64] {
        let mm = self.m * self.m;
        &theta.slice(i)[h * mm..(h + 1) * mm]
    }

    fn embed(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|r| dot(&self.input_map.as_slice()[r * self.p..(r + 1) * self.p], x))
            .collect()
    }

    fn trace(&self, theta: &Tensor, i: usize, x0: &[f64]) -> Trace {
        let m = self.m;
        let mut acts = Vec::with_capacity(self.depth + 1);
        let mut pre = Vec::with_capacity(self.depth);
        acts.push(x0.to_vec());
        for h in 0..self.depth {
            let w = self.layer(theta, i, h);
            let prev = &acts[h];
            let z: Vec<f64> = (0..m).map(|r| dot(&w[r * m..(r + 1) * m], prev)).collect();
            acts.push(z.iter().map(|&v| v.max(0.0)).collect());
            pre.push(z);
        }
        Trace { acts, pre }
    }

    /// Smallest `|pre-activation|` over all layers and coordinates. Finite
    /// differences are only meaningful when this is bounded away from zero.
    pub fn min_abs_preactivation(&self, theta: &Tensor, x: &[f64]) -> f64 {
        let x0 = self.embed(x);
        (0..self.d)
            .flat_map(|i| self.trace(theta, i, &x0).pre.into_iter().flatten())
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
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
            .with_field("depth", self.depth)
            .with_field("activation", "relu")
            .with_field("seed", self.seed)
            .with_field("generator", GENERATOR_ID)
            .with_field("input_map_shared", true)
            .with_field("input_check", self.input_check)
            .with_tensor("theta", self.theta.clone())
            .with_tensor("A", self.input_map.clone())
            .with_tensor("a", self.readout.clone())
            .with_tensor("theta_init", self.theta_init.clone())
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_tag(TAG)?;
        let mut net = DeepParams::from_parts(
            c.tensor("A")?.clone(),
            c.tensor("a")?.clone(),
            c.tensor("theta_init")?.clone(),
            c.field("seed")?,
        )
        .map_err(|e| Error::Container(e.to_string()))?;
        net.set_theta(c.tensor("theta")?.clone())?;
        net.input_check = c.field("input_check")?;
        if (net.p, net.d, net.m, net.depth)
            != (c.field("p")?, c.field("d")?, c.field("m")?, c.field("depth")?)
        {
            return Err(Error::Container("tensor shapes disagree with header".into()));
        }
        Ok(net)
    }
}

impl Network for DeepParams {
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
        let x0 = self.embed(x);
        (0..self.d)
            .map(|i| {
                let tr = self.trace(theta, i, &x0);
                dot(self.readout.slice(i), &tr.acts[self.depth])
            })
            .collect()
    }

    fn backward_unchecked(&self, theta: &Tensor, x: &[f64], upstream: &[f64]) -> Tensor {
        let m = self.m;
        let mm = m * m;
        let x0 = self.embed(x);
        let mut grad = Tensor::zeros(theta.shape());
        for i in 0..self.d {
            if upstream[i] == 0.0 {
                continue;
            }
            let tr = self.trace(theta, i, &x0);
            // delta = ∂f_i/∂(pre-activation of the current layer)
            let mut delta: Vec<f64> = self
                .readout
                .slice(i)
                .iter()
                .zip(&tr.pre[self.depth - 1])
                .map(|(&a, &z)| if z > 0.0 { upstream[i] * a } else { 0.0 })
                .collect();
            let out = grad.slice_mut(i);
            for h in (0..self.depth).rev() {
                let prev = &tr.acts[h];
                let g = &mut out[h * mm..(h + 1) * mm];
                for r in 0..m {
                    let dr = delta[r];
                    if dr != 0.0 {
                        for (gv, pv) in g[r * m..(r + 1) * m].iter_mut().zip(prev) {
                            *gv = dr * pv;
                        }
                    }
                }
                if h == 0 {
                    break;
                }
                let w = self.layer(theta, i, h);
                let mut next = vec![0.0; m];
                for r in 0..m {
                    let dr = delta[r];
                    if dr != 0.0 {
                        for (nv, wv) in next.iter_mut().zip(&w[r * m..(r + 1) * m]) {
                            *nv += dr * wv;
                        }
                    }
                }
                for (nv, &z) in next.iter_mut().zip(&tr.pre[h - 1]) {
                    if z <= 0.0 {
                        *nv = 0.0;
                    }
                }
                delta = next;
            }
        }
        grad
    }

    fn frozen_checksum(&self) -> String {
        sha256_hex(&[self.input_map.as_slice(), self.readout.as_slice()])
    }
}
