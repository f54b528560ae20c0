//! Episodic linear time-varying control with neural disturbance-feedback
//! policies.

mod bounds;
mod dynamics;
mod episodic;
mod generators;
mod rollout;
mod stability;

pub use bounds::{check_episode_bounds, BoundsReport};
pub use dynamics::{
    build_policy_input, recover_disturbance, stabilize_transform, step, CostSpec, HistoryEncoding,
    LtvEpisode, PolicyInput, StageCost,
};
pub use episodic::{
    episode_from_container, episode_to_container, load_episode, run_episodic, save_episode,
    EpisodeOracle, EpisodicRun,
};
pub use generators::{generate_disturbances, DisturbanceModel, LtvFamily, LtvSystem};
pub use rollout::{
    control_gradients, counterfactual_rollout, episode_loss_and_gradient, play_controls,
    policy_inputs, rollout, transfer_decomposition, EpisodeResult, TransferDecomposition,
};
pub use stability::{
    certify, check_sequential_stability, op_norm, Certificate, StabilityReport, Witness,
};
