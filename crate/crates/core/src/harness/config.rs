//! Experiment configuration.
//!
//! Configs are TOML documents. Every section is optional and falls back to
//! the defaults below; unknown keys anywhere are rejected. Numeric settings
//! that have a theory-derived default accept the string `"paper_default"`.
//!
//! ```toml
//! kind = "online_rf"            # online_rf | nearly_convex_synthetic
//!                               # | episodic_control | invariant_suite
//! [seeds]
//! master = 7
//!
//! [architecture]
//! arch = "two_layer"            # two_layer | deep
//! p = 8
//! d = 2
//! m = 256
//! depth = 1
//! b = "paper_default"           # √m
//! activation = "tanh"
//! radius = "paper_default"
//! ball = "joint"                # joint | per_slice
//! input_check = "strict"        # strict | lenient
//!
//! [algorithm]
//! name = "ogd"                  # ogd | adagrad
//! eta0 = "paper_default"
//!
//! [stream]
//! rounds = 256
//! rf_norm = 1.0
//! m_rf = "paper_default"        # m/2
//! loss = "square"               # square | abs | l2
//! loss_lipschitz = 1.0
//!
//! [comparator]
//! kind = "constructive_theta_star"
//! budget = 200
//!
//! [output]
//! dir = "out"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{DisturbanceModel, HistoryEncoding, LtvFamily};
use crate::error::{Error, Result};
use crate::neural::{DeepKappa, InputCheck, OutputLoss};
use crate::oco::{AlgorithmKind, BallMode};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OnlineRf,
    NearlyConvexSynthetic,
    EpisodicControl,
    InvariantSuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::OnlineRf => "online_rf",
            ExperimentKind::NearlyConvexSynthetic => "nearly_convex_synthetic",
            ExperimentKind::EpisodicControl => "episodic_control",
            ExperimentKind::InvariantSuite => "invariant_suite",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "online_rf" => Ok(ExperimentKind::OnlineRf),
            "nearly_convex_synthetic" => Ok(ExperimentKind::NearlyConvexSynthetic),
            "episodic_control" => Ok(ExperimentKind::EpisodicControl),
            "invariant_suite" => Ok(ExperimentKind::InvariantSuite),
            other => Err(Error::Config(format!("unknown experiment kind `{other}`"))),
        }
    }
}

/// A number, or `"paper_default"` to derive it from the other settings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SettingRepr", into = "SettingRepr")]
pub enum Setting {
    #[default]
    PaperDefault,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SettingRepr {
    Num(f64),
    Tag(String),
}

impl TryFrom<SettingRepr> for Setting {
    type Error = String;
    fn try_from(r: SettingRepr) -> std::result::Result<Self, String> {
        match r {
            SettingRepr::Num(v) => Ok(Setting::Value(v)),
            SettingRepr::Tag(s) if s == "paper_default" => Ok(Setting::PaperDefault),
            SettingRepr::Tag(s) => Err(format!("expected a number or \"paper_default\", got \"{s}\"")),
        }
    }
}

impl From<Setting> for SettingRepr {
    fn from(s: Setting) -> Self {
        match s {
            Setting::PaperDefault => SettingRepr::Tag("paper_default".into()),
            Setting::Value(v) => SettingRepr::Num(v),
        }
    }
}

impl Setting {
    pub fn resolve(self, default: impl FnOnce() -> f64) -> f64 {
        match self {
            Setting::PaperDefault => default(),
            Setting::Value(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    TwoLayer,
    Deep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { master: 0 }
    }
}

impl Seeds {
    pub fn derive(&self, component: &str) -> u64 {
        derive_seed(self.master, component)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub arch: Arch,
    /// Input dimension. Ignored by control experiments, where it is fixed by
    /// the horizon and state dimension.
    pub p: usize,
    /// Output dimension. Ignored by control experiments (`d_u` is used).
    pub d: usize,
    pub m: usize,
    pub depth: usize,
    pub b: Setting,
    pub activation: String,
    pub radius: Setting,
    pub ball: BallMode,
    pub input_check: InputCheck,
    pub kappa: DeepKappa,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            arch: Arch::TwoLayer,
            p: 8,
            d: 2,
            m: 256,
            depth: 1,
            b: Setting::PaperDefault,
            activation: "tanh".into(),
            radius: Setting::PaperDefault,
            ball: BallMode::Joint,
            input_check: InputCheck::Strict,
            kappa: DeepKappa::default(),
        }
    }
}

impl ArchitectureConfig {
    pub fn scale(&self) -> f64 {
        self.b.resolve(|| (self.m as f64).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmKind,
    pub eta0: Setting,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            name: AlgorithmKind::Ogd,
            eta0: Setting::PaperDefault,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    /// Number of rounds (or episodes) `T`.
    pub rounds: usize,
    /// RF-norm bound `D` of the teacher.
    pub rf_norm: f64,
    pub m_rf: Setting,
    pub loss: OutputLoss,
    /// Lipschitz constant used by theory-derived step sizes.
    pub loss_lipschitz: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            rounds: 256,
            rf_norm: 1.0,
            m_rf: Setting::PaperDefault,
            loss: OutputLoss::Square,
            loss_lipschitz: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticFamily {
    /// `ℓ_t(θ) = (θ − c)²/2`
    Quadratic,
    /// `ℓ_t(θ) = (θ − y_t)²/2 + α sin(ω θ + φ_t)`
    Wavy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub family: SyntheticFamily,
    pub radius: f64,
    /// Target `c` of the quadratic family.
    pub target: f64,
    /// Wavy targets `y_t` are uniform on `[−spread, spread]`.
    pub spread: f64,
    pub alpha: f64,
    pub omega: f64,
    /// Points per axis of the grid that certifies ε.
    pub certify_grid: usize,
    /// Points of the grid that locates the best fixed decision.
    pub comparator_grid: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            family: SyntheticFamily::Wavy,
            radius: 2.0,
            target: 1.0,
            spread: 1.0,
            alpha: 0.1,
            omega: 5.0,
            certify_grid: 401,
            comparator_grid: 20001,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub family: LtvFamily,
    pub disturbance: DisturbanceModel,
    pub encoding: HistoryEncoding,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            family: LtvFamily::default(),
            disturbance: DisturbanceModel::Sinusoidal {
                period: 10.0,
                drift: 0.05,
            },
            encoding: HistoryEncoding::ZeroPadded,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorKind {
    /// Projected gradient descent on the summed recorded losses.
    OfflineGdOracle,
    /// The explicit parameter that reproduces the teacher's linear part.
    ConstructiveThetaStar,
    /// The teacher itself (zero loss on realizable streams).
    RfTeacherLoss,
    /// The initialization, whose policy outputs are zero.
    ZeroPolicy,
    /// Dense one-dimensional grid with local refinement.
    GridSearch,
}

impl ComparatorKind {
    pub fn name(self) -> &'static str {
        match self {
            ComparatorKind::OfflineGdOracle => "offline_gd_oracle",
            ComparatorKind::ConstructiveThetaStar => "constructive_theta_star",
            ComparatorKind::RfTeacherLoss => "rf_teacher_loss",
            ComparatorKind::ZeroPolicy => "zero_policy",
            ComparatorKind::GridSearch => "grid_search",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparatorConfig {
    /// Unset picks the experiment's natural comparator.
    pub kind: Option<ComparatorKind>,
    /// Passes over the recorded stream.
    pub budget: usize,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        ComparatorConfig {
            kind: None,
            budget: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write the final parameters (and teacher or last episode).
    pub write_params: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            write_params: true,
        }
    }
}

/// Numerical tolerances shared by the invariant suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub fd_step: f64,
    pub fd_relative: f64,
    pub kink_filter: f64,
    pub near_convex_slack: f64,
    pub closed_form: f64,
    pub round_trip: f64,
    pub convexity: f64,
    pub ntk_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            fd_step: 1e-5,
            fd_relative: 1e-4,
            kink_filter: 1e-3,
            near_convex_slack: 1e-8,
            closed_form: 1e-10,
            round_trip: 1e-10,
            convexity: 1e-9,
            ntk_sigmas: 3.0,
        }
    }
}

/// Sample counts of the invariant suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub fd_points: usize,
    pub fd_coordinates: usize,
    pub near_convex_pairs: usize,
    pub bound_draws: usize,
    pub control_instances: usize,
    pub ntk_pairs: usize,
    pub ntk_samples: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            fd_points: 10,
            fd_coordinates: 50,
            near_convex_pairs: 500,
            bound_draws: 500,
            control_instances: 100,
            ntk_pairs: 20,
            ntk_samples: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub stream: StreamConfig,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub comparator: ComparatorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub suite: SuiteConfig,
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml())
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            seeds: Seeds::default(),
            architecture: ArchitectureConfig::default(),
            algorithm: AlgorithmConfig::default(),
            stream: StreamConfig::default(),
            synthetic: SyntheticConfig::default(),
            control: ControlConfig::default(),
            comparator: ComparatorConfig::default(),
            output: OutputConfig::default(),
            tolerances: Tolerances::default(),
            suite: SuiteConfig::default(),
        }
    }

    /// Parse and validate. Errors carry the line and column of the offending
    /// key where available.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let a = &self.architecture;
        if a.m == 0 || a.p == 0 || a.d == 0 || a.depth == 0 {
            return bad("architecture: p, d, m and depth must be positive".into());
        }
        if a.arch == Arch::TwoLayer && a.m % 2 != 0 {
            return bad(format!("architecture.m: two-layer width must be even, got {}", a.m));
        }
        if let Setting::Value(b) = a.b {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("architecture.b: must be positive, got {b}"));
            }
        }
        if let Setting::Value(r) = a.radius {
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("architecture.radius: must be non-negative, got {r}"));
            }
        }
        if crate::neural::Activation::from_tag(&a.activation).is_none() {
            return bad(format!("architecture.activation: unknown tag `{}`", a.activation));
        }
        if a.arch == Arch::TwoLayer && a.activation == "relu" {
            return bad("architecture.activation: the two-layer network needs a smooth activation".into());
        }
        if let Setting::Value(e) = self.algorithm.eta0 {
            if !(e >= 0.0 && e.is_finite()) {
                return bad(format!("algorithm.eta0: must be non-negative, got {e}"));
            }
        }
        let s = &self.stream;
        if !(s.rf_norm >= 0.0 && s.rf_norm.is_finite()) {
            return bad(format!("stream.rf_norm: must be non-negative, got {}", s.rf_norm));
        }
        if let Setting::Value(v) = s.m_rf {
            if v.fract() != 0.0 || v < 1.0 {
                return bad(format!("stream.m_rf: must be a positive integer, got {v}"));
            }
        }
        if !(s.loss_lipschitz > 0.0) {
            return bad("stream.loss_lipschitz: must be positive".into());
        }
        let y = &self.synthetic;
        if !(y.radius > 0.0) || y.certify_grid < 2 || y.comparator_grid < 2 {
            return bad("synthetic: radius must be positive and grids need at least 2 points".into());
        }
        if !(y.alpha >= 0.0 && y.omega >= 0.0 && y.spread >= 0.0) {
            return bad("synthetic: alpha, omega and spread must be non-negative".into());
        }
        self.control
            .family
            .validate()
            .map_err(|e| Error::Config(format!("control.family: {e}")))?;
        if let DisturbanceModel::Sinusoidal { period, .. } = self.control.disturbance {
            if !(period > 0.0) {
                return bad("control.disturbance.period: must be positive".into());
            }
        }
        if self.comparator.budget == 0 {
            return bad("comparator.budget: must be at least 1".into());
        }
        Ok(())
    }
}
