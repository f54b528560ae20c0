//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Every criterion recomputes its key
//! quantities with oracles written here, independently of the library code
//! under test.
//!
//! Run a subset with `cargo test -p neuroco --test acceptance -- 4 7`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use neuroco::control::{
    control_gradients, counterfactual_rollout, rollout, transfer_decomposition, CostSpec,
    DisturbanceModel, HistoryEncoding, LtvEpisode, LtvFamily,
};
use neuroco::harness::{
    constructive_theta_star, execute, run, sample_stream, ExperimentConfig, ExperimentKind,
    SyntheticFamily,
};
use neuroco::neural::{
    init_deep, init_two_layer, Activation, DeepParams, Network, NetworkLoss, OutputLoss,
    TwoLayerParams,
};
use neuroco::oco::{convexity_gap, AlgorithmKind, BallMode};
use neuroco::rf_teacher::{ntk_estimate, sample_teacher_for_student, RfTeacher};
use neuroco::rng::{gaussian_vec, rng_from_seed, unit_vector, SeededRng};
use neuroco::Tensor;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn lib<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> std::result::Result<T, String> {
    r.map_err(|e| format!("library error: {e}"))
}

// ---------------------------------------------------------------- oracles

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn tanh_d1(z: f64) -> f64 {
    let t = z.tanh();
    1.0 - t * t
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Point uniformly distributed in the Frobenius ball of radius `r` about `center`.
fn ball_point(rng: &mut SeededRng, center: &Tensor, r: f64) -> Tensor {
    let n = center.len();
    let dir = unit_vector(rng, n);
    let rad = r * rng.random::<f64>().powf(1.0 / n as f64);
    let data = center.as_slice().iter().zip(dir).map(|(c, u)| c + rad * u).collect();
    Tensor::from_vec(center.shape(), data).unwrap()
}

fn sphere_point(rng: &mut SeededRng, center: &Tensor, r: f64) -> Tensor {
    let dir = unit_vector(rng, center.len());
    let data = center.as_slice().iter().zip(dir).map(|(c, u)| c + r * u).collect();
    Tensor::from_vec(center.shape(), data).unwrap()
}

/// Output signs over all `m` units: first half stored, second half negated.
fn full_signs(net: &TwoLayerParams, i: usize) -> Vec<f64> {
    let h = net.half_signs(i);
    h.iter().copied().chain(h.iter().map(|s| -s)).collect()
}

/// `f_i(θ; x) = (1/b) Σ_r a_{i,r} tanh(θ[i]_r · x)`
fn two_layer_forward(net: &TwoLayerParams, theta: &Tensor, x: &[f64]) -> Vec<f64> {
    let (p, m) = (net.p(), net.m());
    (0..net.d())
        .map(|i| {
            let a = full_signs(net, i);
            let s = theta.slice(i);
            (0..m).map(|r| a[r] * dot(&s[r * p..(r + 1) * p], x).tanh()).sum::<f64>() / net.b()
        })
        .collect()
}

/// `∇_{θ[i]} f_i`, flattened `m × p`.
fn two_layer_slice_grad(net: &TwoLayerParams, theta: &Tensor, x: &[f64], i: usize) -> Vec<f64> {
    let (p, m) = (net.p(), net.m());
    let a = full_signs(net, i);
    let s = theta.slice(i);
    let mut g = vec![0.0; m * p];
    for r in 0..m {
        let c = a[r] * tanh_d1(dot(&s[r * p..(r + 1) * p], x)) / net.b();
        for j in 0..p {
            g[r * p + j] = c * x[j];
        }
    }
    g
}

/// Deep ReLU forward; returns the outputs and the smallest `|pre-activation|`.
fn deep_forward(net: &DeepParams, theta: &Tensor, x: &[f64]) -> (Vec<f64>, f64) {
    let (p, m, depth) = (net.p(), net.m(), net.depth());
    let a = net.input_map().as_slice();
    let x0: Vec<f64> = (0..m).map(|r| dot(&a[r * p..(r + 1) * p], x)).collect();
    let mut min_pre = f64::INFINITY;
    let out = (0..net.d())
        .map(|i| {
            let slice = theta.slice(i);
            let mut h = x0.clone();
            for layer in 0..depth {
                let w = &slice[layer * m * m..(layer + 1) * m * m];
                h = (0..m)
                    .map(|r| {
                        let z = dot(&w[r * m..(r + 1) * m], &h);
                        min_pre = min_pre.min(z.abs());
                        z.max(0.0)
                    })
                    .collect();
            }
            dot(net.readout().slice(i), &h)
        })
        .collect();
    (out, min_pre)
}

/// `g_i(x) = Σ_r (c_{i,r} · x) tanh'(w_{i,r} · x)`
fn teacher_eval(t: &RfTeacher, x: &[f64]) -> Vec<f64> {
    let p = t.p();
    (0..t.d())
        .map(|i| {
            let w = t.features().slice(i);
            let c = t.coefs().slice(i);
            (0..t.m_rf())
                .map(|r| dot(&c[r * p..(r + 1) * p], x) * tanh_d1(dot(&w[r * p..(r + 1) * p], x)))
                .sum()
        })
        .collect()
}

/// `θ*` with rows `θ₁[r] ± (b/2) a_r c_r`.
fn own_theta_star(net: &TwoLayerParams, t: &RfTeacher) -> Tensor {
    let (p, half) = (net.p(), net.m() / 2);
    let mut out = net.theta_init().clone();
    for i in 0..net.d() {
        let a = net.half_signs(i).to_vec();
        let c = t.coefs().slice(i).to_vec();
        let s = out.slice_mut(i);
        for r in 0..half {
            for j in 0..p {
                let delta = 0.5 * net.b() * a[r] * c[r * p + j];
                s[r * p + j] += delta;
                s[(r + half) * p + j] -= delta;
            }
        }
    }
    out
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// States `x_1..x_{K+1}` under applied controls `u`.
fn simulate(ep: &LtvEpisode, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut xs = vec![ep.x1.clone()];
    for k in 0..ep.a.len() {
        let next = &ep.a[k] * dv(&xs[k]) + &ep.b[k] * dv(&u[k]) + dv(&ep.w[k]);
        xs.push(to_vec(&next));
    }
    xs
}

/// `x_k = Φ(k,1) x_1 + Σ_{i<k} Φ(k,i+1)(B_i u_i + w_i)` with `Φ(k,j) = A_{k−1}⋯A_j`.
fn closed_form_states(ep: &LtvEpisode, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let horizon = ep.a.len();
    let n = ep.x1.len();
    let phi = |k: usize, j: usize| -> DMatrix<f64> {
        let mut out = DMatrix::identity(n, n);
        for l in j..k {
            out = &ep.a[l - 1] * out;
        }
        out
    };
    (1..=horizon + 1)
        .map(|k| {
            let mut x = phi(k, 1) * dv(&ep.x1);
            for i in 1..k {
                x += phi(k, i + 1) * (&ep.b[i - 1] * dv(&u[i - 1]) + dv(&ep.w[i - 1]));
            }
            to_vec(&x)
        })
        .collect()
}

fn tracking(ep: &LtvEpisode) -> (&[Vec<f64>], f64) {
    match &ep.cost {
        CostSpec::QuadraticTracking { targets, mu } => (targets, *mu),
        _ => panic!("expected quadratic tracking costs"),
    }
}

/// `Σ_{k≤K} ½‖x_k − g_k‖² + ½μ‖u_k‖²`
fn episode_loss(ep: &LtvEpisode, u: &[Vec<f64>]) -> f64 {
    let (targets, mu) = tracking(ep);
    let xs = simulate(ep, u);
    (0..ep.a.len())
        .map(|k| {
            let dx: f64 = xs[k].iter().zip(&targets[k]).map(|(a, b)| (a - b) * (a - b)).sum();
            0.5 * dx + 0.5 * mu * dot(&u[k], &u[k])
        })
        .sum()
}

/// Verify `‖A_k⋯A_{k−n+1}‖ ≤ C₁ρⁿ` and `‖B_k‖ ≤ C₂` by SVD.
fn certificate_holds(ep: &LtvEpisode, c1: f64, rho: f64, c2: f64) -> bool {
    let horizon = ep.a.len();
    let n = ep.x1.len();
    let spec = |m: &DMatrix<f64>| m.clone().svd(false, false).singular_values.max();
    for k in 1..=horizon {
        let mut prod = DMatrix::<f64>::identity(n, n);
        for len in 1..=k {
            prod = &prod * &ep.a[k - len];
            if spec(&prod) > c1 * rho.powi(len as i32) * (1.0 + 1e-12) {
                return false;
            }
        }
    }
    ep.b.iter().all(|b| spec(b) <= c2 * (1.0 + 1e-12))
}

fn relu_kernel(x: &[f64], y: &[f64]) -> f64 {
    let c = dot(x, y).clamp(-1.0, 1.0);
    c * (PI - c.acos()) / (2.0 * PI)
}

// ---------------------------------------------------------------- criteria

fn gradient_correctness() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = rng_from_seed(101);
    let (draws, coords) = (10, 50);

    let net = lib(init_two_layer(8, 2, 64, 8.0, Activation::Tanh, 11))?;
    let radius = 8.0 * 2f64.sqrt() / 8.0;
    let mut worst_two = 0.0f64;
    for _ in 0..draws {
        let theta = ball_point(&mut rng, net.theta_init(), radius);
        let x = unit_vector(&mut rng, 8);
        let up = gaussian_vec(&mut rng, 2);
        let g = lib(net.backward_at(&theta, &x, &up))?;
        for _ in 0..coords {
            let j = rng.random_range(0..theta.len());
            let (mut tp, mut tm) = (theta.clone(), theta.clone());
            tp.as_mut_slice()[j] += H;
            tm.as_mut_slice()[j] -= H;
            let fd = (dot(&up, &two_layer_forward(&net, &tp, &x))
                - dot(&up, &two_layer_forward(&net, &tm, &x)))
                / (2.0 * H);
            worst_two = worst_two.max(rel_err(g.as_slice()[j], fd));
        }
    }

    let deep = lib(init_deep(8, 2, 32, 2, 12))?;
    let mut worst_deep = 0.0f64;
    let (mut accepted, mut rejected) = (0, 0);
    while accepted < draws {
        let theta = ball_point(&mut rng, deep.theta_init(), 1.0);
        let x = unit_vector(&mut rng, 8);
        if deep_forward(&deep, &theta, &x).1 < 1e-3 {
            rejected += 1;
            ensure!(rejected < 1000, "kink filter rejected {rejected} draws");
            continue;
        }
        accepted += 1;
        let up = gaussian_vec(&mut rng, 2);
        let g = lib(deep.backward_at(&theta, &x, &up))?;
        for _ in 0..coords {
            let j = rng.random_range(0..theta.len());
            let (mut tp, mut tm) = (theta.clone(), theta.clone());
            tp.as_mut_slice()[j] += H;
            tm.as_mut_slice()[j] -= H;
            let fd = (dot(&up, &deep_forward(&deep, &tp, &x).0) - dot(&up, &deep_forward(&deep, &tm, &x).0))
                / (2.0 * H);
            worst_deep = worst_deep.max(rel_err(g.as_slice()[j], fd));
        }
    }
    let msg = format!(
        "max rel err two-layer {worst_two:.2e}, deep {worst_deep:.2e} (limit 1e-4; {rejected} deep draws filtered)"
    );
    ensure!(worst_two <= 1e-4 && worst_deep <= 1e-4, "{msg}");
    Ok(msg)
}

fn near_convexity_margin() -> Outcome {
    let (p, d, m, b, radius) = (8, 2, 256, 16.0, 2.0);
    let (c, l) = (1.0, 1.0);
    let eps = 2.0 * c * l * radius * radius / b;
    ensure!(eps == 0.5, "margin constant {eps} != 0.5");
    let net = lib(init_two_layer(p, d, m, b, Activation::Tanh, 21))?;
    let center = net.theta_init().clone();
    let mut rng = rng_from_seed(202);
    let abs_loss = |theta: &Tensor, x: &[f64], y: &[f64]| -> f64 {
        two_layer_forward(&net, theta, x).iter().zip(y).map(|(f, t)| (f - t).abs()).sum()
    };
    let mut worst = f64::NEG_INFINITY;
    let mut worst_lib_mismatch = 0.0f64;
    for k in 0..500 {
        let x = unit_vector(&mut rng, p);
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (t1, t2) = match k % 3 {
            0 => (ball_point(&mut rng, &center, radius), ball_point(&mut rng, &center, radius)),
            1 => (sphere_point(&mut rng, &center, radius), sphere_point(&mut rng, &center, radius)),
            _ => {
                let a = sphere_point(&mut rng, &center, radius);
                let anti = center.add(&center).sub(&a);
                (a, anti)
            }
        };
        // subgradient at t1 through the outer absolute value
        let f1 = two_layer_forward(&net, &t1, &x);
        let mut lin = 0.0;
        for i in 0..d {
            let s = (f1[i] - y[i]).signum();
            let g = two_layer_slice_grad(&net, &t1, &x, i);
            let diff: Vec<f64> = t2.slice(i).iter().zip(t1.slice(i)).map(|(a, b)| a - b).collect();
            lin += s * dot(&g, &diff);
        }
        let gap = abs_loss(&t1, &x, &y) + lin - abs_loss(&t2, &x, &y);
        worst = worst.max(gap);
        let oracle = lib(NetworkLoss::new(&net, x.clone(), y.clone(), OutputLoss::Abs))?;
        let lib_gap = lib(convexity_gap(&oracle, &t2, &t1))?;
        worst_lib_mismatch = worst_lib_mismatch.max((lib_gap - gap).abs());
    }
    let msg = format!("max gap {worst:.4e} vs eps {eps} + 1e-8 over 500 pairs; library gap agrees to {worst_lib_mismatch:.1e}");
    ensure!(worst <= eps + 1e-8 && worst_lib_mismatch <= 1e-10, "{msg}");
    Ok(msg)
}

fn gradient_constants() -> Outcome {
    let (p, d, m, b) = (8, 2, 256, 16.0);
    let c = 1.0;
    let net = lib(init_two_layer(p, d, m, b, Activation::Tanh, 31))?;
    let mut rng = rng_from_seed(303);
    let norm_bound = (m as f64).sqrt() * c / b;
    let lip_bound = c / b;
    let (mut norm_ratio, mut lip_ratio, mut mismatch) = (0.0f64, 0.0f64, 0.0f64);
    let lib_slice_grad = |theta: &Tensor, x: &[f64], i: usize| -> Result<Vec<f64>, String> {
        let mut up = vec![0.0; d];
        up[i] = 1.0;
        Ok(lib(net.backward_at(theta, x, &up))?.slice(i).to_vec())
    };
    for k in 0..500 {
        let theta = ball_point(&mut rng, net.theta_init(), 4.0);
        let x = unit_vector(&mut rng, p);
        let i = k % d;
        let g = lib_slice_grad(&theta, &x, i)?;
        let own = two_layer_slice_grad(&net, &theta, &x, i);
        mismatch = mismatch.max(g.iter().zip(&own).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        norm_ratio = norm_ratio.max(norm(&g) / norm_bound);
    }
    for k in 0..500 {
        let theta = ball_point(&mut rng, net.theta_init(), 4.0);
        let scale = [1e-3, 1e-1, 1.0, 4.0][k % 4];
        let other = ball_point(&mut rng, &theta, scale);
        let x = unit_vector(&mut rng, p);
        let i = k % d;
        let ga = lib_slice_grad(&theta, &x, i)?;
        let gb = lib_slice_grad(&other, &x, i)?;
        let dg: Vec<f64> = ga.iter().zip(&gb).map(|(a, b)| a - b).collect();
        let dt: Vec<f64> = theta.slice(i).iter().zip(other.slice(i)).map(|(a, b)| a - b).collect();
        if norm(&dt) > 0.0 {
            lip_ratio = lip_ratio.max(norm(&dg) / (lip_bound * norm(&dt)));
        }
    }
    let msg = format!(
        "grad-norm/bound max {norm_ratio:.4}, Lipschitz/bound max {lip_ratio:.4} on 500 draws each; analytic vs own {mismatch:.1e}"
    );
    ensure!(norm_ratio <= 1.0 && lip_ratio <= 1.0 && mismatch <= 1e-12, "{msg}");
    Ok(msg)
}

/// Replays projected OGD on `[−R, R]` and returns the learner's losses.
fn own_ogd(losses: &[(f64, f64, f64, f64)], radius: f64, eta0: f64) -> Vec<f64> {
    let value = |l: &(f64, f64, f64, f64), x: f64| 0.5 * (x - l.0).powi(2) + l.1 * (l.2 * x + l.3).sin();
    let deriv = |l: &(f64, f64, f64, f64), x: f64| x - l.0 + l.1 * l.2 * (l.2 * x + l.3).cos();
    let mut x = 0.0f64;
    let mut out = Vec::new();
    for (t, l) in losses.iter().enumerate() {
        out.push(value(l, x));
        x = (x - eta0 / ((t + 1) as f64).sqrt() * deriv(l, x)).clamp(-radius, radius);
    }
    out
}

fn ogd_bounds() -> Outcome {
    let (radius, rounds) = (2.0, 400usize);
    let mut notes = Vec::new();
    for family in [SyntheticFamily::Quadratic, SyntheticFamily::Wavy] {
        let mut cfg = ExperimentConfig::new(ExperimentKind::NearlyConvexSynthetic);
        cfg.seeds.master = 4;
        cfg.stream.rounds = rounds;
        cfg.algorithm.name = AlgorithmKind::Ogd;
        cfg.synthetic.family = family;
        cfg.synthetic.radius = radius;
        let res = lib(execute(&cfg))?;
        let sc = &cfg.synthetic;
        let stream = sample_stream(sc, rounds, cfg.seeds.derive("stream"));
        let params: Vec<(f64, f64, f64, f64)> =
            stream.losses.iter().map(|l| (l.target, l.alpha, l.omega, l.phase)).collect();

        let g = match family {
            SyntheticFamily::Quadratic => radius + sc.target.abs(),
            SyntheticFamily::Wavy => radius + sc.spread + sc.alpha * sc.omega,
        };
        if family == SyntheticFamily::Quadratic {
            ensure!(g == 3.0, "quadratic stream gradient bound {g} != 3");
        }
        let lib_g = res.metadata["resolved"]["gradient_bound"].as_f64().unwrap_or(f64::NAN);
        ensure!(lib_g <= g + 1e-12, "library gradient bound {lib_g} exceeds {g}");

        let learner = own_ogd(&params, radius, 2.0 * radius / lib_g);
        let cum: f64 = learner.iter().sum();
        let lib_cum = res.trace.last().map_or(f64::NAN, |r| r.cum_loss);
        ensure!(
            (cum - lib_cum).abs() <= 1e-9 * cum.abs().max(1.0),
            "{family:?}: replayed learner loss {cum} vs trace {lib_cum}"
        );

        let n = 400_001;
        let scan = (0..n)
            .map(|i| -radius + 2.0 * radius * i as f64 / (n - 1) as f64)
            .map(|x| params.iter().map(|l| 0.5 * (x - l.0).powi(2) + l.1 * (l.2 * x + l.3).sin()).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let lib_comp = res.trace.last().map_or(f64::NAN, |r| r.comparator_cum_loss);
        ensure!(lib_comp <= scan + 1e-9, "{family:?}: comparator {lib_comp} worse than dense scan {scan}");
        let regret = cum - scan;
        let lib_regret = res.trace.final_regret().unwrap_or(f64::NAN);

        let t = rounds as f64;
        let (eps, eps_note) = match family {
            SyntheticFamily::Quadratic => (0.0, String::new()),
            SyntheticFamily::Wavy => {
                let cert = res.metadata["epsilon_certificate"]["epsilon"].as_f64().unwrap_or(f64::NAN);
                // −δ²/2 from the quadratic plus at most 2α + αω|δ| from the ripple
                let analytic = 2.0 * sc.alpha + 0.5 * (sc.alpha * sc.omega).powi(2);
                let mut rng = rng_from_seed(404);
                let mut probe = f64::NEG_INFINITY;
                for _ in 0..200_000 {
                    let l = params[rng.random_range(0..params.len())];
                    let (x, y) = (rng.random_range(-radius..=radius), rng.random_range(-radius..=radius));
                    let v = |z: f64| 0.5 * (z - l.0).powi(2) + l.1 * (l.2 * z + l.3).sin();
                    let dvx = x - l.0 + l.1 * l.2 * (l.2 * x + l.3).cos();
                    probe = probe.max(v(x) + dvx * (y - x) - v(y));
                }
                ensure!(probe > 0.0, "wavy stream is not actually non-convex (probe gap {probe})");
                ensure!(
                    probe <= cert && cert <= analytic,
                    "certified eps {cert} not within [probe {probe}, analytic {analytic}]"
                );
                (cert, format!(" eps {cert:.4} (probe {probe:.4}, analytic {analytic:.4})"))
            }
        };
        let bound = 3.0 * radius * g * t.sqrt() + eps * t;
        ensure!(
            regret <= bound && lib_regret <= bound,
            "{family:?}: regret {regret} (library {lib_regret}) exceeds {bound}"
        );
        notes.push(format!("{family:?} regret {regret:.3} <= {bound:.2}{eps_note}"));
    }
    Ok(notes.join("; "))
}

fn constructive_comparator() -> Outcome {
    let (p, d, rf_norm) = (8, 2, 1.0);
    let mut errors = Vec::new();
    let mut notes = Vec::new();
    for m in [64usize, 256, 1024] {
        let mut cfg = ExperimentConfig::new(ExperimentKind::OnlineRf);
        cfg.seeds.master = 5;
        let b = (m as f64).sqrt();
        let net = lib(init_two_layer(p, d, m, b, Activation::Tanh, cfg.seeds.derive("init")))?;
        let teacher = lib(sample_teacher_for_student(&net, rf_norm, cfg.seeds.derive("teacher")))?;
        ensure!(teacher.m_rf() == m / 2, "teacher width {} for m = {m}", teacher.m_rf());
        let star = own_theta_star(&net, &teacher);
        let lib_star = lib(constructive_theta_star(&teacher, &net))?;
        let diff = star.distance(&lib_star);
        ensure!(diff <= 1e-14 * star.norm(), "m = {m}: library theta* differs by {diff}");

        let dist = star.distance(net.theta_init());
        let limit = b * rf_norm * (d as f64).sqrt() / (m as f64).sqrt();
        ensure!(dist <= limit, "m = {m}: ||theta* - theta1|| = {dist} > {limit}");

        let mut rng = rng_from_seed(505);
        let mut sup = 0.0f64;
        for _ in 0..200 {
            let x = unit_vector(&mut rng, p);
            let g = teacher_eval(&teacher, &x);
            let lib_g = lib(teacher.eval(&x))?;
            ensure!(
                g.iter().zip(&lib_g).all(|(a, b)| (a - b).abs() <= 1e-12),
                "m = {m}: teacher evaluation disagrees"
            );
            let f = two_layer_forward(&net, &star, &x);
            sup = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(sup, f64::max);
        }
        notes.push(format!("m={m} dist {dist:.4}/{limit:.4} sup err {sup:.3e}"));
        errors.push(sup);
    }
    let msg = notes.join("; ");
    ensure!(errors.windows(2).all(|w| w[1] <= w[0]), "sup error not monotone: {msg}");
    Ok(msg)
}

fn online_rf_trend() -> Outcome {
    let mut avgs = Vec::new();
    for (m, rounds) in [(64usize, 256usize), (1024, 4096)] {
        let mut cfg = ExperimentConfig::new(ExperimentKind::OnlineRf);
        cfg.seeds.master = 1;
        cfg.architecture.m = m;
        cfg.stream.rounds = rounds;
        cfg.stream.rf_norm = 1.0;
        cfg.stream.loss = OutputLoss::Square;
        let res = lib(execute(&cfg))?;
        let avg = res.trace.final_average_regret().ok_or("empty trace")?;

        if m == 64 {
            // recompute the comparator losses from θ* and the teacher directly
            let net = lib(init_two_layer(8, 2, m, (m as f64).sqrt(), Activation::Tanh, cfg.seeds.derive("init")))?;
            let teacher = lib(sample_teacher_for_student(&net, 1.0, cfg.seeds.derive("teacher")))?;
            let star = own_theta_star(&net, &teacher);
            let mut rng = rng_from_seed(cfg.seeds.derive("stream"));
            let mut prev = 0.0;
            for rec in res.trace.records() {
                let x = unit_vector(&mut rng, 8);
                let f = two_layer_forward(&net, &star, &x);
                let g = teacher_eval(&teacher, &x);
                let own: f64 = 0.5 * f.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let lib_round = rec.comparator_cum_loss - prev;
                prev = rec.comparator_cum_loss;
                ensure!(
                    (own - lib_round).abs() <= 1e-9 * own.abs().max(1e-3),
                    "round {}: comparator loss {lib_round} vs recomputed {own}",
                    rec.t
                );
            }
        }
        avgs.push(avg);
    }
    let msg = format!(
        "avg regret (m=64,T=256) {:.4e}, (m=1024,T=4096) {:.4e}, ratio {:.3} (limit 0.5)",
        avgs[0],
        avgs[1],
        avgs[1] / avgs[0]
    );
    ensure!(avgs[1] <= 0.5 * avgs[0], "{msg}");
    Ok(msg)
}

fn random_policy_setup(seed: u64) -> Result<(LtvFamily, TwoLayerParams, SeededRng), String> {
    let fam = LtvFamily { d_x: 2, d_u: 2, horizon: 10, ..LtvFamily::default() };
    let enc = HistoryEncoding::ZeroPadded;
    let net = lib(init_two_layer(enc.input_dim(fam.horizon, fam.d_x), fam.d_u, 16, 4.0, Activation::Tanh, seed))?;
    Ok((fam, net, rng_from_seed(seed + 1)))
}

fn control_exactness() -> Outcome {
    let (fam, net, mut rng) = random_policy_setup(707)?;
    let enc = HistoryEncoding::ZeroPadded;
    let (mut closed, mut round_trip, mut convex) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for _ in 0..100 {
        let ep = lib(fam.sample_episode(&DisturbanceModel::Uniform, &mut rng))?;
        let cert = ep.certificate.ok_or("generated episode carries no certificate")?;
        ensure!(certificate_holds(&ep, cert.c1, cert.rho, cert.c2), "certificate fails an independent SVD check");

        let theta = ball_point(&mut rng, net.theta_init(), 3.0);
        let res = lib(rollout(&net, &theta, &ep, enc))?;
        let sim = simulate(&ep, &res.controls);
        let cf = closed_form_states(&ep, &res.controls);
        let dec = lib(transfer_decomposition(&ep, &res.net_outputs))?;
        for ((a, b), (c, e)) in sim.iter().flatten().zip(cf.iter().flatten()).zip(
            res.states.iter().flatten().zip(dec.states.iter().flatten()),
        ) {
            closed = closed.max((a - b).abs()).max((a - c).abs()).max((a - e).abs());
        }
        for k in 0..fam.horizon {
            let w = &res.states[k + 1];
            let pred = &ep.a[k] * dv(&res.states[k]) + &ep.b[k] * dv(&res.controls[k]);
            for j in 0..fam.d_x {
                round_trip = round_trip.max((w[j] - pred[j] - ep.w[k][j]).abs());
                round_trip = round_trip.max((res.recovered[k][j] - ep.w[k][j]).abs());
            }
        }
        let draw = |rng: &mut SeededRng| -> Vec<Vec<f64>> {
            (0..fam.horizon).map(|_| (0..fam.d_u).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
        };
        let (u, v) = (draw(&mut rng), draw(&mut rng));
        let (lu, lv) = (episode_loss(&ep, &u), episode_loss(&ep, &v));
        for lam in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let mix: Vec<Vec<f64>> = u
                .iter()
                .zip(&v)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| lam * p + (1.0 - lam) * q).collect())
                .collect();
            convex = convex.max(episode_loss(&ep, &mix) - (lam * lu + (1.0 - lam) * lv));
        }
    }
    let msg = format!(
        "closed form {closed:.1e} (1e-10), round trip {round_trip:.1e} (1e-10), convexity excess {convex:.1e} (1e-9) on 100 instances"
    );
    ensure!(closed <= 1e-10 && round_trip <= 1e-10 && convex <= 1e-9, "{msg}");
    Ok(msg)
}

fn control_bounds() -> Outcome {
    let (fam, net, mut rng) = random_policy_setup(808)?;
    let enc = HistoryEncoding::ZeroPadded;
    let (mut state_ratio, mut grad_ratio, mut fd_err) = (0.0f64, 0.0f64, 0.0f64);
    let models = [
        DisturbanceModel::Uniform,
        DisturbanceModel::Sinusoidal { period: 7.0, drift: 0.3 },
        DisturbanceModel::SignAlternating,
    ];
    for k in 0..100 {
        let ep = lib(fam.sample_episode(&models[k % 3], &mut rng))?;
        let cert = ep.certificate.ok_or("missing certificate")?;
        ensure!(certificate_holds(&ep, cert.c1, cert.rho, cert.c2), "certificate fails an independent SVD check");
        let theta = ball_point(&mut rng, net.theta_init(), 3.0);
        let res = lib(counterfactual_rollout(&net, &theta, &ep, enc))?;
        let u = res.controls.clone();

        // finite differences of the quadratic episode loss are exact up to rounding
        let h = 1e-4;
        let mut grads = vec![vec![0.0; fam.d_u]; fam.horizon];
        for s in 0..fam.horizon {
            for j in 0..fam.d_u {
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[s][j] += h;
                dn[s][j] -= h;
                grads[s][j] = (episode_loss(&ep, &up) - episode_loss(&ep, &dn)) / (2.0 * h);
            }
        }
        let lib_grads = control_gradients(&ep, &res.states, &res.controls);
        for (a, b) in grads.iter().flatten().zip(lib_grads.iter().flatten()) {
            fd_err = fd_err.max((a - b).abs() / a.abs().max(1.0));
        }

        let (targets, mu) = tracking(&ep);
        let xs = simulate(&ep, &u);
        let d_x = xs[..fam.horizon].iter().map(|x| norm(x)).fold(0.0, f64::max);
        let d_u = u.iter().map(|v| norm(v)).fold(0.0, f64::max);
        let l_c = 1.0 + targets.iter().map(|g| norm(g)).fold(0.0, f64::max) + mu;
        let l_c_prime = l_c * (d_x + d_u).max(1.0);
        let gain = cert.c1 / (1.0 - cert.rho);
        let grad_bound = l_c_prime * cert.c2 * gain;
        let state_bound = gain * (ep.w_bound + d_u * cert.c2);
        let max_grad = grads.iter().map(|g| norm(g)).fold(0.0, f64::max);
        let max_state = xs.iter().map(|x| norm(x)).fold(0.0, f64::max);
        grad_ratio = grad_ratio.max(max_grad / grad_bound);
        state_ratio = state_ratio.max(max_state / state_bound);
    }

    // every episode of a learning run
    let mut cfg = ExperimentConfig::new(ExperimentKind::EpisodicControl);
    cfg.seeds.master = 8;
    cfg.stream.rounds = 25;
    cfg.architecture.ball = BallMode::PerSlice;
    let run = lib(execute(&cfg))?;
    let run_ok = !run.bounds.is_empty() && run.bounds.iter().all(|b| b.pass());
    let run_grad = run.bounds.iter().map(|b| b.max_control_grad / b.grad_bound).fold(0.0, f64::max);
    let run_state = run.bounds.iter().map(|b| b.max_state / b.state_bound).fold(0.0, f64::max);

    let msg = format!(
        "state/bound max {state_ratio:.3}, grad/bound max {grad_ratio:.3} on 100 instances (adjoint vs FD {fd_err:.1e}); \
         learning run over {} episodes: state {run_state:.3}, grad {run_grad:.3}",
        run.bounds.len()
    );
    ensure!(state_ratio <= 1.0 && grad_ratio <= 1.0 && fd_err <= 1e-6 && run_ok, "{msg}");
    Ok(msg)
}

fn control_regret_trend() -> Outcome {
    let mut avgs = Vec::new();
    for rounds in [25usize, 200] {
        let mut cfg = ExperimentConfig::new(ExperimentKind::EpisodicControl);
        cfg.seeds.master = 1;
        cfg.stream.rounds = rounds;
        cfg.architecture.m = 256;
        cfg.architecture.ball = BallMode::PerSlice;
        cfg.control.family = LtvFamily { d_x: 2, d_u: 2, horizon: 10, ..LtvFamily::default() };
        let res = lib(execute(&cfg))?;
        ensure!(
            matches!(cfg.control.disturbance, DisturbanceModel::Sinusoidal { .. }),
            "default disturbances are not sinusoidal"
        );
        let comp = res.comparator.as_ref().ok_or("no comparator")?;
        ensure!(comp.feasible, "T = {rounds}: comparator outside the decision set");
        avgs.push(res.trace.final_average_regret().ok_or("empty trace")?);
    }
    let msg = format!(
        "avg episodic regret T=25 {:.4}, T=200 {:.4} (need <= {:.4})",
        avgs[0],
        avgs[1],
        0.5 * avgs[0]
    );
    ensure!(avgs[1] <= 0.5 * avgs[0], "{msg}");
    Ok(msg)
}

fn ntk_sanity() -> Outcome {
    let mut rng = rng_from_seed(1010);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let x = unit_vector(&mut rng, 6);
        let y = unit_vector(&mut rng, 6);
        let est = lib(ntk_estimate(&x, &y, &Activation::Relu, 100_000, 5000 + k))?;
        ensure!(est.std_error > 0.0, "zero standard error");
        worst = worst.max((est.estimate - relu_kernel(&x, &y)).abs() / est.std_error);
    }
    let msg = format!("max deviation {worst:.2} standard errors over 20 pairs (limit 3)");
    ensure!(worst <= 3.0, "{msg}");
    Ok(msg)
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut configs = Vec::new();
    let mut rf = ExperimentConfig::new(ExperimentKind::OnlineRf);
    rf.architecture.m = 64;
    rf.stream.rounds = 200;
    configs.push(rf);
    let mut syn = ExperimentConfig::new(ExperimentKind::NearlyConvexSynthetic);
    syn.stream.rounds = 300;
    configs.push(syn);
    let mut ctl = ExperimentConfig::new(ExperimentKind::EpisodicControl);
    ctl.architecture.m = 64;
    ctl.architecture.ball = BallMode::PerSlice;
    ctl.stream.rounds = 12;
    configs.push(ctl);
    let mut files = 0;
    for mut cfg in configs {
        cfg.seeds.master = 11;
        let mut outputs = Vec::new();
        for rep in 0..2 {
            cfg.output.dir = dir.path().join(format!("{}-{rep}", cfg.kind.name()));
            lib(run(&cfg))?;
            let mut names: Vec<_> = std::fs::read_dir(&cfg.output.dir)
                .map_err(|e| e.to_string())?
                .map(|e| e.unwrap().file_name())
                .filter(|n| n != "metadata.json")
                .collect();
            names.sort();
            let contents: Vec<_> = names
                .iter()
                .map(|n| (n.clone(), std::fs::read(cfg.output.dir.join(n)).unwrap()))
                .collect();
            outputs.push(contents);
        }
        ensure!(
            outputs[0].iter().any(|(n, _)| n == "trace.csv"),
            "{}: no trace.csv written",
            cfg.kind.name()
        );
        ensure!(outputs[0] == outputs[1], "{}: outputs differ between runs", cfg.kind.name());
        files += outputs[0].len();
    }
    Ok(format!("3 experiment kinds, {files} output files byte-identical across reruns"))
}

// ---------------------------------------------------------------- driver

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", limit: Duration::from_secs(60), check: gradient_correctness },
        Criterion { id: 2, name: "near-convexity margin", limit: Duration::from_secs(120), check: near_convexity_margin },
        Criterion { id: 3, name: "gradient norm and Lipschitz constants", limit: Duration::from_secs(60), check: gradient_constants },
        Criterion { id: 4, name: "OGD regret bounds", limit: Duration::from_secs(30), check: ogd_bounds },
        Criterion { id: 5, name: "constructive comparator", limit: Duration::from_secs(300), check: constructive_comparator },
        Criterion { id: 6, name: "online RF regret trend", limit: Duration::from_secs(600), check: online_rf_trend },
        Criterion { id: 7, name: "control exactness", limit: Duration::from_secs(120), check: control_exactness },
        Criterion { id: 8, name: "control Lipschitz and bounded states", limit: Duration::from_secs(120), check: control_bounds },
        Criterion { id: 9, name: "episodic control regret trend", limit: Duration::from_secs(600), check: control_regret_trend },
        Criterion { id: 10, name: "NTK sanity", limit: Duration::from_secs(60), check: ntk_sanity },
        Criterion { id: 11, name: "reproducibility", limit: Duration::from_secs(600), check: reproducibility },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let text = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {text}"))
        });
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {}: {} | {} [{:.1}s / {}s]",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
