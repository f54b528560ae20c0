//! Experiment orchestration: build the learner, stream and comparator from a
//! config, run, and persist the artifacts.
//!
//! Output directory layout:
//!
//! | file            | content                                              |
//! |-----------------|------------------------------------------------------|
//! | `trace.csv`     | per-round regret trace                               |
//! | `metadata.json` | resolved constants, seeds, comparator diagnostics    |
//! | `params.nrco`   | final network parameters                             |
//! | `teacher.nrco`  | RF teacher (`online_rf`)                             |
//! | `episode.nrco`  | last recorded episode (`episodic_control`)           |
//! | `suite.json`    | check results (`invariant_suite`)                    |
//!
//! Nothing time- or host-dependent is written, so identical configs produce
//! identical bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::container::{write_atomic, Container};
use crate::control::{
    check_episode_bounds, episode_to_container, generate_disturbances, run_episodic, BoundsReport,
    EpisodeOracle, HistoryEncoding, LtvEpisode,
};
use crate::error::{Error, Result};
use crate::harness::checks::{run_suite, SuiteReport};
use crate::harness::comparator::{
    constructive_theta_star, fixed_comparator, offline_comparator, ComparatorResult,
};
use crate::harness::config::{Arch, ComparatorKind, ExperimentConfig, ExperimentKind};
use crate::harness::synthetic::{certify_epsilon, grid_comparator, sample_stream, EpsilonCertificate};
use crate::harness::trace_io::emit_trace;
use crate::neural::{
    deep_recommended_radius, init_deep, init_two_layer, theory_constants, two_layer_recommended_radius,
    Activation, ArchMeta, DeepParams, Network, NetworkLoss, TwoLayerParams,
};
use crate::oco::{run_nearly_convex, BallSet, FnOracle, OcoState, RegretTrace, RunFailure};
use crate::rf_teacher::{sample_teacher_with, FeatureSource, RfTeacher};
use crate::rng::{rng_from_seed, unit_vector, GENERATOR_ID};
use crate::tensor::Tensor;

/// Either network family, so experiments can hold one by value.
pub enum Student {
    TwoLayer(TwoLayerParams),
    Deep(DeepParams),
}

impl Student {
    pub fn net(&self) -> &dyn Network {
        match self {
            Student::TwoLayer(n) => n,
            Student::Deep(n) => n,
        }
    }

    pub fn net_mut(&mut self) -> &mut dyn Network {
        match self {
            Student::TwoLayer(n) => n,
            Student::Deep(n) => n,
        }
    }

    pub fn to_container(&self) -> Container {
        match self {
            Student::TwoLayer(n) => n.to_container(),
            Student::Deep(n) => n.to_container(),
        }
    }
}

/// Comparator facts recorded in metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparatorSummary {
    pub kind: ComparatorKind,
    pub total: f64,
    pub approximate: bool,
    /// The comparator point lies in the decision set.
    pub feasible: bool,
    pub distance_from_center: f64,
    pub solver: Option<crate::harness::comparator::SolverInfo>,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub trace: RegretTrace,
    pub comparator: Option<ComparatorSummary>,
    pub metadata: Value,
    /// Containers to write, by file name.
    pub artifacts: Vec<(String, Container)>,
    pub suite: Option<SuiteReport>,
    /// Per-episode bound checks (`episodic_control` only).
    pub bounds: Vec<BoundsReport>,
    /// Final iterate.
    pub theta: Option<Tensor>,
}

impl ExperimentResult {
    /// Whether every hard check embedded in the run passed.
    pub fn checks_pass(&self) -> bool {
        self.suite.as_ref().map_or(true, |s| s.pass()) && self.bounds.iter().all(|b| b.pass())
    }
}

fn fail(f: RunFailure) -> Error {
    log::error!("run aborted at round {} after {} completed rounds", f.round, f.partial.len());
    match f.source {
        Error::NonFinite { what, .. } => Error::NonFinite { round: f.round, what },
        other => other,
    }
}

fn activation(cfg: &ExperimentConfig) -> Result<Activation> {
    Activation::from_tag(&cfg.architecture.activation)
        .ok_or_else(|| Error::Config(format!("unknown activation `{}`", cfg.architecture.activation)))
}

fn build_student(cfg: &ExperimentConfig, p: usize, d: usize) -> Result<Student> {
    let a = &cfg.architecture;
    let seed = cfg.seeds.derive("init");
    Ok(match a.arch {
        Arch::TwoLayer => Student::TwoLayer(
            init_two_layer(p, d, a.m, a.scale(), activation(cfg)?, seed)?.with_input_check(a.input_check),
        ),
        Arch::Deep => Student::Deep(init_deep(p, d, a.m, a.depth, seed)?.with_input_check(a.input_check)),
    })
}

fn arch_meta(cfg: &ExperimentConfig, d: usize) -> Result<ArchMeta> {
    let a = &cfg.architecture;
    Ok(match a.arch {
        Arch::TwoLayer => ArchMeta::TwoLayer {
            m: a.m,
            b: a.scale(),
            c: activation(cfg)?.smoothness_constant().unwrap_or(1.0),
        },
        Arch::Deep => ArchMeta::Deep {
            m: a.m,
            depth: a.depth,
            d,
            kappa: a.kappa,
        },
    })
}

fn default_radius(cfg: &ExperimentConfig, p: usize, d: usize) -> f64 {
    let a = &cfg.architecture;
    match a.arch {
        Arch::TwoLayer => two_layer_recommended_radius(a.m, a.scale(), cfg.stream.rf_norm, d),
        Arch::Deep => deep_recommended_radius(a.m, a.depth, p, a.kappa.radius),
    }
}

fn make_algorithm(cfg: &ExperimentConfig, set: BallSet, eta0: f64) -> Result<OcoState> {
    OcoState::new(cfg.algorithm.name, set, eta0)
}

fn summarize(set: &BallSet, c: &ComparatorResult) -> ComparatorSummary {
    ComparatorSummary {
        kind: c.kind,
        total: c.total,
        approximate: c.approximate,
        feasible: set.contains_within(&c.theta, 1e-9),
        distance_from_center: c.theta.distance(set.center()),
        solver: c.solver.clone(),
    }
}

fn seeds_json(cfg: &ExperimentConfig) -> Value {
    let names = ["init", "teacher", "stream", "system", "disturbance", "sampling", "comparator"];
    let mut m = serde_json::Map::new();
    m.insert("master".into(), json!(cfg.seeds.master));
    for n in names {
        m.insert(n.into(), json!(cfg.seeds.derive(n)));
    }
    m.insert("generator".into(), json!(GENERATOR_ID));
    Value::Object(m)
}

fn base_metadata(cfg: &ExperimentConfig, trace: &RegretTrace) -> Value {
    json!({
        "kind": cfg.kind.name(),
        "config": serde_json::to_value(cfg).expect("config is plain data"),
        "seeds": seeds_json(cfg),
        "rounds": trace.len(),
        "final_regret": trace.final_regret(),
        "final_average_regret": trace.final_average_regret(),
        "cumulative_loss": trace.last().map(|r| r.cum_loss),
    })
}

fn merge(meta: &mut Value, extra: Value) {
    if let (Value::Object(a), Value::Object(b)) = (meta, extra) {
        a.extend(b);
    }
}

/// Run the configured experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::OnlineRf => online_rf(cfg),
        ExperimentKind::NearlyConvexSynthetic => synthetic(cfg),
        ExperimentKind::EpisodicControl => episodic_control(cfg),
        ExperimentKind::InvariantSuite => {
            let report = run_suite(cfg)?;
            let mut metadata = base_metadata(cfg, &RegretTrace::new());
            merge(
                &mut metadata,
                json!({ "suite_pass": report.pass(), "checks": report.checks.len() }),
            );
            Ok(ExperimentResult {
                kind: cfg.kind,
                trace: RegretTrace::new(),
                comparator: None,
                metadata,
                artifacts: Vec::new(),
                suite: Some(report),
                bounds: Vec::new(),
                theta: None,
            })
        }
    }
}

/// Write every artifact of `result` into `dir` (created if needed). Each
/// file is written atomically.
pub fn write_artifacts(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if let Some(suite) = &result.suite {
        let path = dir.join("suite.json");
        let mut text = serde_json::to_string_pretty(suite)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    } else {
        let path = dir.join("trace.csv");
        emit_trace(&result.trace, &path)?;
        written.push(path);
    }
    let path = dir.join("metadata.json");
    let mut text = serde_json::to_string_pretty(&result.metadata)?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    written.push(path);
    if cfg.output.write_params {
        for (name, c) in &result.artifacts {
            let path = dir.join(name);
            c.save(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Execute and write into `cfg.output.dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = execute(cfg)?;
    write_artifacts(cfg, &result, &cfg.output.dir)?;
    Ok(result)
}

struct RfStream {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn rf_stream(teacher: &RfTeacher, rounds: usize, seed: u64) -> RfStream {
    let mut rng = rng_from_seed(seed);
    let inputs: Vec<Vec<f64>> = (0..rounds).map(|_| unit_vector(&mut rng, teacher.p())).collect();
    let targets = inputs.iter().map(|x| teacher.eval_unchecked(x)).collect();
    RfStream { inputs, targets }
}

fn online_rf(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let a = &cfg.architecture;
    let s = &cfg.stream;
    let (p, d) = (a.p, a.d);
    let mut student = build_student(cfg, p, d)?;
    let m_rf = s.m_rf.resolve(|| (a.m / 2).max(1) as f64) as usize;
    let act = activation(cfg)?;
    let from_student = matches!(&student, Student::TwoLayer(n) if 2 * m_rf == n.m());
    let source = match &student {
        Student::TwoLayer(n) if from_student => FeatureSource::Student(n),
        _ => FeatureSource::Gaussian,
    };
    let teacher = sample_teacher_with(p, d, s.rf_norm, m_rf, cfg.seeds.derive("teacher"), act, source)?;
    let stream = rf_stream(&teacher, s.rounds, cfg.seeds.derive("stream"));

    let radius = a.radius.resolve(|| default_radius(cfg, p, d));
    let theory = theory_constants(&arch_meta(cfg, d)?, s.loss_lipschitz, radius);
    let eta0 = cfg.algorithm.eta0.resolve(|| theory.eta0);
    let theta1 = student.net().theta_init().clone();
    let set = BallSet::new(theta1.clone(), radius, a.ball)?;
    let mut alg = make_algorithm(cfg, set.clone(), eta0)?;

    let trace_result = {
        let net = student.net();
        let oracles = stream
            .inputs
            .iter()
            .zip(&stream.targets)
            .map(|(x, y)| NetworkLoss::new(net, x.clone(), y.clone(), s.loss))
            .collect::<Result<Vec<_>>>()?;
        run_nearly_convex(&mut alg, oracles, |_| {})
    };
    let mut trace = trace_result.map_err(fail)?;
    let theta = alg.into_iterate();
    student.net_mut().set_theta(theta.clone())?;

    let net = student.net();
    let oracles = stream
        .inputs
        .iter()
        .zip(&stream.targets)
        .map(|(x, y)| NetworkLoss::new(net, x.clone(), y.clone(), s.loss))
        .collect::<Result<Vec<_>>>()?;
    let star = match &student {
        Student::TwoLayer(n) if from_student => Some(constructive_theta_star(&teacher, n)?),
        _ => None,
    };
    let kind = cfg.comparator.kind.unwrap_or(if star.is_some() {
        ComparatorKind::ConstructiveThetaStar
    } else {
        ComparatorKind::OfflineGdOracle
    });
    let comparator = match kind {
        ComparatorKind::ConstructiveThetaStar => {
            let star = star.clone().ok_or_else(|| {
                Error::Config(
                    "comparator.kind: constructive_theta_star needs a two-layer student with m_rf = m/2".into(),
                )
            })?;
            fixed_comparator(kind, &oracles, star)?
        }
        ComparatorKind::ZeroPolicy => fixed_comparator(kind, &oracles, theta1.clone())?,
        ComparatorKind::RfTeacherLoss => {
            let losses: Vec<f64> = stream
                .targets
                .iter()
                .map(|y| s.loss.value(y, y))
                .collect();
            ComparatorResult {
                kind,
                total: losses.iter().sum(),
                theta: theta1.clone(),
                losses,
                approximate: false,
                solver: None,
            }
        }
        ComparatorKind::OfflineGdOracle => {
            let mut starts = vec![theta1.clone(), theta.clone()];
            starts.extend(star.clone());
            offline_comparator(&oracles, &set, &starts, cfg.comparator.budget)?
        }
        ComparatorKind::GridSearch => {
            return Err(Error::Config(
                "comparator.kind: grid_search applies only to nearly_convex_synthetic".into(),
            ))
        }
    };
    trace.set_comparator(&comparator.losses)?;
    let mut summary = summarize(&set, &comparator);
    if kind == ComparatorKind::RfTeacherLoss {
        // the teacher is not a point of the decision set
        summary.feasible = false;
        summary.distance_from_center = f64::NAN;
    }

    let mut metadata = base_metadata(cfg, &trace);
    merge(
        &mut metadata,
        json!({
            "architecture": net.arch(),
            "frozen_checksum": net.frozen_checksum(),
            "resolved": {
                "b": a.scale(),
                "radius": radius,
                "eta0": eta0,
                "m_rf": m_rf,
                "gradient_bound": theory.gradient_bound,
                "epsilon": theory.epsilon,
                "teacher_features": if from_student { "student_init" } else { "gaussian" },
            },
            "comparator": summary_json(&summary),
            "distance_travelled": theta.distance(&theta1),
        }),
    );
    Ok(ExperimentResult {
        kind: cfg.kind,
        trace,
        comparator: Some(summary),
        metadata,
        artifacts: vec![
            ("params.nrco".into(), student.to_container()),
            ("teacher.nrco".into(), teacher.to_container()),
        ],
        suite: None,
        bounds: Vec::new(),
        theta: Some(theta),
    })
}

fn summary_json(s: &ComparatorSummary) -> Value {
    let mut v = serde_json::to_value(s).expect("plain data");
    if let Value::Object(m) = &mut v {
        m.insert(
            "label".into(),
            json!(if s.approximate { "approximate argmin" } else { "exact" }),
        );
    }
    v
}

fn synthetic(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let sc = &cfg.synthetic;
    let rounds = cfg.stream.rounds;
    let stream = sample_stream(sc, rounds, cfg.seeds.derive("stream"));
    let radius = stream.radius;
    let g = stream.gradient_bound();
    let cert: EpsilonCertificate = certify_epsilon(&stream, sc.certify_grid)?;
    let eta0 = cfg
        .algorithm
        .eta0
        .resolve(|| if g > 0.0 { 2.0 * radius / g } else { 1.0 });
    let set = BallSet::joint(Tensor::zeros(&[1]), radius)?;
    let mut alg = make_algorithm(cfg, set.clone(), eta0)?;
    let oracles: Vec<_> = stream.losses.iter().map(|l| FnOracle(l.oracle_fn())).collect();
    let mut trace = run_nearly_convex(&mut alg, oracles.iter(), |_| {}).map_err(fail)?;
    let theta = alg.into_iterate();

    let kind = cfg.comparator.kind.unwrap_or(ComparatorKind::GridSearch);
    let comparator = match kind {
        ComparatorKind::GridSearch => {
            let (x, _) = grid_comparator(&stream, sc.comparator_grid);
            fixed_comparator(kind, &oracles, Tensor::vector(vec![x]))?
        }
        ComparatorKind::OfflineGdOracle => offline_comparator(
            &oracles,
            &set,
            &[Tensor::zeros(&[1]), theta.clone()],
            cfg.comparator.budget,
        )?,
        ComparatorKind::ZeroPolicy => fixed_comparator(kind, &oracles, Tensor::zeros(&[1]))?,
        other => {
            return Err(Error::Config(format!(
                "comparator.kind: {} does not apply to nearly_convex_synthetic",
                other.name()
            )))
        }
    };
    trace.set_comparator(&comparator.losses)?;
    let summary = summarize(&set, &comparator);
    let t = rounds as f64;
    let bound = 3.0 * radius * g * t.sqrt() + cert.epsilon * t;
    let mut metadata = base_metadata(cfg, &trace);
    merge(
        &mut metadata,
        json!({
            "resolved": { "radius": radius, "gradient_bound": g, "eta0": eta0 },
            "epsilon_certificate": cert,
            "regret_bound": bound,
            "within_bound": trace.final_regret().map_or(true, |r| r <= bound),
            "comparator": summary_json(&summary),
        }),
    );
    Ok(ExperimentResult {
        kind: cfg.kind,
        trace,
        comparator: Some(summary),
        metadata,
        artifacts: Vec::new(),
        suite: None,
        bounds: Vec::new(),
        theta: Some(theta),
    })
}

/// Episodes of one fixed system with disturbances drawn per episode.
pub fn control_episodes(cfg: &ExperimentConfig) -> Result<Vec<LtvEpisode>> {
    let c = &cfg.control;
    let mut sys_rng = rng_from_seed(cfg.seeds.derive("system"));
    let system = c.family.sample_system(&mut sys_rng)?;
    let mut rng = rng_from_seed(cfg.seeds.derive("disturbance"));
    (0..cfg.stream.rounds)
        .map(|t| {
            let w = generate_disturbances(
                &c.disturbance,
                c.family.horizon,
                c.family.d_x,
                c.family.w_bound,
                t,
                &mut rng,
            );
            system.episode(w)
        })
        .collect()
}

fn episodic_control(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let c = &cfg.control;
    let fam = &c.family;
    let a = &cfg.architecture;
    let p = c.encoding.input_dim(fam.horizon, fam.d_x);
    let d = fam.d_u;
    let mut student = build_student(cfg, p, d)?;
    let episodes = control_episodes(cfg)?;
    let lipschitz = episodes.first().map_or(1.0, |e| e.cost.lipschitz());
    let radius = a.radius.resolve(|| default_radius(cfg, p, d));
    // per-episode loss sums K stage costs
    let theory = theory_constants(
        &arch_meta(cfg, d)?,
        lipschitz.max(f64::MIN_POSITIVE) * (fam.horizon as f64).sqrt(),
        radius,
    );
    let eta0 = cfg.algorithm.eta0.resolve(|| theory.eta0);
    let theta1 = student.net().theta_init().clone();
    let set = BallSet::new(theta1.clone(), radius, a.ball)?;
    let mut alg = make_algorithm(cfg, set.clone(), eta0)?;
    let run = run_episodic(student.net_mut(), &mut alg, episodes.clone(), c.encoding).map_err(fail)?;
    let mut trace = run.trace;
    let theta = run.theta;

    let bounds = episodes
        .iter()
        .zip(&run.results)
        .map(|(ep, res)| check_episode_bounds(ep, res))
        .collect::<Result<Vec<_>>>()?;

    let net = student.net();
    let oracles: Vec<EpisodeOracle<'_, dyn Network>> = run
        .recorded
        .iter()
        .map(|ep| EpisodeOracle {
            net,
            episode: ep,
            encoding: c.encoding,
        })
        .collect();
    let kind = cfg.comparator.kind.unwrap_or(ComparatorKind::OfflineGdOracle);
    let comparator = match kind {
        ComparatorKind::OfflineGdOracle => offline_comparator(
            &oracles,
            &set,
            &[theta1.clone(), theta.clone()],
            cfg.comparator.budget,
        )?,
        ComparatorKind::ZeroPolicy => fixed_comparator(kind, &oracles, theta1.clone())?,
        other => {
            return Err(Error::Config(format!(
                "comparator.kind: {} does not apply to episodic_control",
                other.name()
            )))
        }
    };
    trace.set_comparator(&comparator.losses)?;
    let summary = summarize(&set, &comparator);

    let worst_state = bounds
        .iter()
        .map(|b| b.max_state / b.state_bound)
        .fold(0.0, f64::max);
    let worst_grad = bounds
        .iter()
        .map(|b| b.max_control_grad / b.grad_bound)
        .fold(0.0, f64::max);
    let mut notes = Vec::new();
    if c.encoding == HistoryEncoding::ZeroPadded {
        notes.push("policy input at step 1 is the zero vector, not a unit vector");
    }
    let mut metadata = base_metadata(cfg, &trace);
    merge(
        &mut metadata,
        json!({
            "architecture": net.arch(),
            "frozen_checksum": net.frozen_checksum(),
            "resolved": {
                "b": a.scale(),
                "radius": radius,
                "eta0": eta0,
                "input_dim": p,
                "cost_lipschitz": lipschitz,
            },
            "certificate": episodes.first().and_then(|e| e.certificate),
            "bounds": {
                "episodes": bounds.len(),
                "all_pass": bounds.iter().all(|b| b.pass()),
                "worst_state_ratio": worst_state,
                "worst_gradient_ratio": worst_grad,
            },
            "notes": notes,
            "comparator": summary_json(&summary),
        }),
    );
    let mut artifacts = vec![("params.nrco".to_string(), student.to_container())];
    if let Some(last) = run.recorded.last() {
        artifacts.push(("episode.nrco".into(), episode_to_container(last)?));
    }
    Ok(ExperimentResult {
        kind: cfg.kind,
        trace,
        comparator: Some(summary),
        metadata,
        artifacts,
        suite: None,
        bounds,
        theta: Some(theta),
    })
}
