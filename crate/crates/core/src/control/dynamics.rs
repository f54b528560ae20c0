use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::stability::Certificate;
use crate::error::{Error, Result};
use crate::tensor::norm;

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_system(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &[f64], u: &[f64]) -> Result<()> {
    let dx = x.len();
    check_len("A rows", dx, a.nrows())?;
    check_len("A columns", dx, a.ncols())?;
    check_len("B rows", dx, b.nrows())?;
    check_len("control", b.ncols(), u.len())
}

/// `y = M v`
pub(crate) fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * v[c]).sum())
        .collect()
}

/// `y = Mᵀ v`
pub(crate) fn mat_t_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.ncols())
        .map(|c| (0..m.nrows()).map(|r| m[(r, c)] * v[r]).sum())
        .collect()
}

/// `x_next = A x + B u + w`
pub fn step(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_system(a, b, x, u)?;
    check_len("disturbance", x.len(), w.len())?;
    let ax = mat_vec(a, x);
    let bu = mat_vec(b, u);
    Ok((0..x.len()).map(|r| ax[r] + bu[r] + w[r]).collect())
}

/// `w = x_next − A x − B u`
pub fn recover_disturbance(
    x_next: &[f64],
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    check_system(a, b, x, u)?;
    check_len("next state", x.len(), x_next.len())?;
    let ax = mat_vec(a, x);
    let bu = mat_vec(b, u);
    Ok((0..x.len()).map(|r| x_next[r] - ax[r] - bu[r]).collect())
}

/// How the disturbance history is turned into a network input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryEncoding {
    /// `vec([w_{k−1}, …, w_1, 0, …])` normalized; the empty history maps to 0.
    #[default]
    ZeroPadded,
    /// As above with a trailing constant 1 before normalizing, so every input
    /// has unit norm.
    ConstantCoordinate,
}

impl HistoryEncoding {
    pub fn input_dim(self, horizon: usize, d_x: usize) -> usize {
        match self {
            HistoryEncoding::ZeroPadded => horizon * d_x,
            HistoryEncoding::ConstantCoordinate => horizon * d_x + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyInput {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Policy input for step `k` (1-based) from disturbances `history[0..k−1]`,
/// most recent first.
pub fn build_policy_input(
    history: &[Vec<f64>],
    k: usize,
    horizon: usize,
    d_x: usize,
    encoding: HistoryEncoding,
) -> Result<PolicyInput> {
    if k == 0 || k > horizon {
        return Err(Error::invalid(format!("step {k} outside 1..={horizon}")));
    }
    if history.len() < k - 1 {
        return Err(Error::invalid(format!(
            "step {k} needs {} past disturbances, got {}",
            k - 1,
            history.len()
        )));
    }
    let mut raw = vec![0.0; encoding.input_dim(horizon, d_x)];
    for (slot, w) in history[..k - 1].iter().rev().enumerate() {
        check_len("disturbance", d_x, w.len())?;
        raw[slot * d_x..(slot + 1) * d_x].copy_from_slice(w);
    }
    if encoding == HistoryEncoding::ConstantCoordinate {
        *raw.last_mut().expect("non-empty") = 1.0;
    }
    let n = norm(&raw);
    let normalized = if n > 0.0 {
        raw.iter().map(|v| v / n).collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(PolicyInput { raw, normalized })
}

/// A convex stage cost `c_k(x, u)` with `‖∇c_k‖ ≤ L_c max{1, ‖x‖ + ‖u‖}`.
pub trait StageCost: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, k: usize, x: &[f64], u: &[f64]) -> f64;
    /// `(∇_x c_k, ∇_u c_k)`
    fn gradient(&self, k: usize, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>);
    fn lipschitz(&self) -> f64;
}

/// Stage costs for one episode. Steps `k` are 1-based.
#[derive(Clone)]
pub enum CostSpec {
    Zero,
    /// `½‖x − g_k‖² + ½ μ ‖u‖²`
    QuadraticTracking { targets: Vec<Vec<f64>>, mu: f64 },
    Custom(Arc<dyn StageCost>),
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostSpec::Zero => f.write_str("Zero"),
            CostSpec::QuadraticTracking { mu, .. } => {
                write!(f, "QuadraticTracking {{ mu: {mu} }}")
            }
            CostSpec::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

impl CostSpec {
    pub fn tag(&self) -> &str {
        match self {
            CostSpec::Zero => "zero",
            CostSpec::QuadraticTracking { .. } => "quadratic_tracking",
            CostSpec::Custom(c) => c.name(),
        }
    }

    pub fn value(&self, k: usize, x: &[f64], u: &[f64]) -> f64 {
        match self {
            CostSpec::Zero => 0.0,
            CostSpec::QuadraticTracking { targets, mu } => {
                let g = &targets[k - 1];
                let dx: f64 = x.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
                let du: f64 = u.iter().map(|v| v * v).sum();
                0.5 * dx + 0.5 * mu * du
            }
            CostSpec::Custom(c) => c.value(k, x, u),
        }
    }

    pub fn gradient(&self, k: usize, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self {
            CostSpec::Zero => (vec![0.0; x.len()], vec![0.0; u.len()]),
            CostSpec::QuadraticTracking { targets, mu } => {
                let g = &targets[k - 1];
                (
                    x.iter().zip(g).map(|(a, b)| a - b).collect(),
                    u.iter().map(|v| mu * v).collect(),
                )
            }
            CostSpec::Custom(c) => c.gradient(k, x, u),
        }
    }

    /// `L_c`; for quadratic tracking `1 + max_k ‖g_k‖ + μ`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            CostSpec::Zero => 0.0,
            CostSpec::QuadraticTracking { targets, mu } => {
                1.0 + targets.iter().map(|g| norm(g)).fold(0.0, f64::max) + mu
            }
            CostSpec::Custom(c) => c.lipschitz(),
        }
    }
}

/// One episode of `x_{k+1} = A_k x_k + B_k u_k + w_k`, `k = 1..K`.
///
/// When `gains` is set, the applied control is `u_k = F_k x_k + v_k` where
/// `v_k` is the policy output, so the dynamics seen by the policy are
/// `(A_k + B_k F_k, B_k)`.
#[derive(Clone, Debug)]
pub struct LtvEpisode {
    pub x1: Vec<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub w: Vec<Vec<f64>>,
    pub cost: CostSpec,
    pub gains: Option<Vec<DMatrix<f64>>>,
    pub w_bound: f64,
    pub certificate: Option<Certificate>,
}

impl LtvEpisode {
    pub fn new(
        x1: Vec<f64>,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        w: Vec<Vec<f64>>,
        cost: CostSpec,
        w_bound: f64,
    ) -> Result<Self> {
        let ep = LtvEpisode {
            x1,
            a,
            b,
            w,
            cost,
            gains: None,
            w_bound,
            certificate: None,
        };
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.a.len();
        if k == 0 {
            return Err(Error::invalid("episode horizon must be positive"));
        }
        check_len("B matrices", k, self.b.len())?;
        check_len("disturbances", k, self.w.len())?;
        let dx = self.x1.len();
        let du = self.b[0].ncols();
        for t in 0..k {
            check_len("A rows", dx, self.a[t].nrows())?;
            check_len("A columns", dx, self.a[t].ncols())?;
            check_len("B rows", dx, self.b[t].nrows())?;
            check_len("B columns", du, self.b[t].ncols())?;
            check_len("disturbance", dx, self.w[t].len())?;
        }
        if let Some(gains) = &self.gains {
            check_len("gains", k, gains.len())?;
            for f in gains {
                check_len("gain rows", du, f.nrows())?;
                check_len("gain columns", dx, f.ncols())?;
            }
        }
        if let CostSpec::QuadraticTracking { targets, mu } = &self.cost {
            check_len("targets", k, targets.len())?;
            for g in targets {
                check_len("target", dx, g.len())?;
            }
            if !(*mu >= 0.0) {
                return Err(Error::invalid("control weight must be non-negative"));
            }
        }
        if !(self.w_bound >= 0.0) {
            return Err(Error::invalid("disturbance bound must be non-negative"));
        }
        for (t, w) in self.w.iter().enumerate() {
            if norm(w) > self.w_bound * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "disturbance {} has norm {} above the bound {}",
                    t + 1,
                    norm(w),
                    self.w_bound
                )));
            }
        }
        if norm(&self.x1) > self.w_bound * (1.0 + 1e-12) {
            log::warn!(
                "initial state norm {} exceeds the disturbance bound {}",
                norm(&self.x1),
                self.w_bound
            );
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn d_x(&self) -> usize {
        self.x1.len()
    }

    pub fn d_u(&self) -> usize {
        self.b[0].ncols()
    }

    /// `A_k + B_k F_k` (1-based `k`), or `A_k` without gains.
    pub fn closed_loop_a(&self, k: usize) -> DMatrix<f64> {
        match &self.gains {
            Some(f) => &self.a[k - 1] + &self.b[k - 1] * &f[k - 1],
            None => self.a[k - 1].clone(),
        }
    }

    /// Applied control for policy output `v` at state `x`.
    pub fn applied_control(&self, k: usize, x: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.gains {
            Some(f) => {
                let fx = mat_vec(&f[k - 1], x);
                fx.iter().zip(v).map(|(a, b)| a + b).collect()
            }
            None => v.to_vec(),
        }
    }

    /// Copy with the disturbances replaced, e.g. by recovered ones.
    pub fn with_disturbances(&self, w: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = self.clone();
        out.w = w;
        out.validate()?;
        Ok(out)
    }
}

/// Closed-loop transform `A'_k = A_k + B_k F_k`. Gains compose with any
/// already present. The stability certificate is dropped.
pub fn stabilize_transform(episode: &LtvEpisode, gains: Vec<DMatrix<f64>>) -> Result<LtvEpisode> {
    check_len("gains", episode.horizon(), gains.len())?;
    for f in &gains {
        check_len("gain rows", episode.d_u(), f.nrows())?;
        check_len("gain columns", episode.d_x(), f.ncols())?;
    }
    let mut out = episode.clone();
    out.gains = Some(match &episode.gains {
        Some(old) => old.iter().zip(&gains).map(|(a, b)| a + b).collect(),
        None => gains,
    });
    out.certificate = None;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_vec, rng_from_seed};

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn step_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(step(&i2, &i2, &[1.0, -2.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap(), vec![1.0, -2.0]);
        let x = step(&scalar(0.5), &scalar(1.0), &[1.0], &[1.0], &[0.1]).unwrap();
        assert!((x[0] - 1.6).abs() < 1e-15);
        assert!(step(&i2, &i2, &[1.0], &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn recover_inverts_step() {
        let mut rng = rng_from_seed(3);
        let a = DMatrix::from_vec(3, 3, gaussian_vec(&mut rng, 9));
        let b = DMatrix::from_vec(3, 2, gaussian_vec(&mut rng, 6));
        let x = gaussian_vec(&mut rng, 3);
        let u = gaussian_vec(&mut rng, 2);
        let w = gaussian_vec(&mut rng, 3);
        let next = step(&a, &b, &x, &u, &w).unwrap();
        // straight-line re-evaluation
        for r in 0..3 {
            let mut v = w[r];
            for c in 0..3 {
                v += a[(r, c)] * x[c];
            }
            for c in 0..2 {
                v += b[(r, c)] * u[c];
            }
            assert!((next[r] - v).abs() < 1e-12);
        }
        let back = recover_disturbance(&next, &a, &b, &x, &u).unwrap();
        for (p, q) in back.iter().zip(&w) {
            assert!((p - q).abs() < 1e-12);
        }
        let w = recover_disturbance(&[1.6], &scalar(0.5), &scalar(1.0), &[1.0], &[1.0]).unwrap();
        assert!((w[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn policy_input_examples() {
        let empty = build_policy_input(&[], 1, 3, 1, HistoryEncoding::ZeroPadded).unwrap();
        assert_eq!(empty.raw, vec![0.0; 3]);
        assert_eq!(empty.normalized, vec![0.0; 3]);

        let h = vec![vec![3.0], vec![4.0]];
        let z = build_policy_input(&h, 3, 3, 1, HistoryEncoding::ZeroPadded).unwrap();
        assert_eq!(z.raw, vec![4.0, 3.0, 0.0]);
        assert!((z.normalized[0] - 0.8).abs() < 1e-15);
        assert!((z.normalized[1] - 0.6).abs() < 1e-15);
        assert_eq!(z.normalized[2], 0.0);

        let c = build_policy_input(&[], 1, 3, 1, HistoryEncoding::ConstantCoordinate).unwrap();
        assert_eq!(c.normalized, vec![0.0, 0.0, 0.0, 1.0]);
        assert!(build_policy_input(&h, 4, 3, 1, HistoryEncoding::ZeroPadded).is_err());
    }

    #[test]
    fn equal_history_fills_evenly() {
        let (horizon, dx) = (5, 2);
        let h = vec![vec![0.7, 0.7]; horizon];
        let z = build_policy_input(&h, horizon, horizon, dx, HistoryEncoding::ZeroPadded).unwrap();
        let expected = 1.0 / (((horizon - 1) * dx) as f64).sqrt();
        for (j, v) in z.normalized.iter().enumerate() {
            if j < (horizon - 1) * dx {
                assert!((v - expected).abs() < 1e-15);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn quadratic_tracking_constant() {
        let cost = CostSpec::QuadraticTracking {
            targets: vec![vec![3.0, 4.0], vec![0.0, 1.0]],
            mu: 0.5,
        };
        assert_eq!(cost.lipschitz(), 6.5);
        assert_eq!(cost.value(1, &[3.0, 4.0], &[2.0]), 1.0);
        let (gx, gu) = cost.gradient(2, &[1.0, 1.0], &[2.0]);
        assert_eq!(gx, vec![1.0, 0.0]);
        assert_eq!(gu, vec![1.0]);
    }

    #[test]
    fn scalar_stabilization() {
        let ep = LtvEpisode::new(
            vec![0.0],
            vec![scalar(1.2)],
            vec![scalar(1.0)],
            vec![vec![0.0]],
            CostSpec::Zero,
            1.0,
        )
        .unwrap();
        let st = stabilize_transform(&ep, vec![scalar(-0.5)]).unwrap();
        assert!((st.closed_loop_a(1)[(0, 0)] - 0.7).abs() < 1e-15);
        assert!(stabilize_transform(&ep, vec![]).is_err());
    }

    #[test]
    fn oversized_disturbance_rejected() {
        let r = LtvEpisode::new(
            vec![0.0],
            vec![scalar(1.0)],
            vec![scalar(1.0)],
            vec![vec![2.0]],
            CostSpec::Zero,
            1.0,
        );
        assert!(r.is_err());
    }
}
