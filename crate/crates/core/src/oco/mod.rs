//! Online convex optimization over Frobenius balls, and the reduction that
//! lets any such algorithm run on nearly-convex losses.

mod algorithm;
mod ball;
mod nearly_convex;
mod regret;

pub use algorithm::{AlgorithmKind, OcoState, OnlineAlgorithm, ADAGRAD_EPS};
pub use ball::{gaussian_like, BallMode, BallSet};
pub use nearly_convex::{
    convexity_gap, run_nearly_convex, verify_nearly_convex, Evaluation, FnOracle, Linearization,
    LossEvent, LossOracle, NearConvexityReport, PairSampling, RunFailure, NEAR_CONVEX_SLACK,
};
pub use regret::{RegretRecord, RegretTrace};
