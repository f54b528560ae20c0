//! Experiment configuration, orchestration, comparators and persistence.

mod checks;
mod comparator;
mod config;
mod experiments;
mod synthetic;
mod trace_io;

pub use checks::{relative_error, run_suite, CheckResult, SuiteReport};
pub use comparator::{
    constructive_theta_star, fixed_comparator, offline_comparator, round_losses, ComparatorResult,
    SolverInfo,
};
pub use config::{
    AlgorithmConfig, Arch, ArchitectureConfig, ComparatorConfig, ComparatorKind, ControlConfig,
    ExperimentConfig, ExperimentKind, OutputConfig, Seeds, Setting, StreamConfig, SuiteConfig,
    SyntheticConfig, SyntheticFamily, Tolerances,
};
pub use experiments::{
    control_episodes, execute, run, write_artifacts, ComparatorSummary, ExperimentResult, Student,
};
pub use synthetic::{
    certify_epsilon, grid_comparator, sample_stream, EpsilonCertificate, ScalarLoss, SyntheticStream,
};
pub use trace_io::{
    check_regret_identity, emit_trace, format_trace, parse_trace, IDENTITY_TOL, TRACE_HEADER,
};
