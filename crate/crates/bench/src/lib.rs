//! Fixtures shared by the kernel benchmarks.

use neuroco::control::{DisturbanceModel, HistoryEncoding, LtvEpisode, LtvFamily};
use neuroco::neural::{init_deep, init_two_layer, Activation, DeepParams, TwoLayerParams};
use neuroco::rng::{rng_from_seed, unit_vector};

pub const SEED: u64 = 2024;

pub fn unit_input(p: usize) -> Vec<f64> {
    unit_vector(&mut rng_from_seed(SEED ^ 1), p)
}

pub fn two_layer(p: usize, d: usize, m: usize) -> TwoLayerParams {
    init_two_layer(p, d, m, (m as f64).sqrt(), Activation::Tanh, SEED).expect("valid sizes")
}

pub fn deep(p: usize, d: usize, m: usize, depth: usize) -> DeepParams {
    init_deep(p, d, m, depth, SEED).expect("valid sizes")
}

/// A certified episode and a policy net sized for its history encoding.
pub fn control(m: usize, horizon: usize) -> (LtvEpisode, TwoLayerParams) {
    let family = LtvFamily {
        horizon,
        ..LtvFamily::default()
    };
    let model = DisturbanceModel::Sinusoidal {
        period: 10.0,
        drift: 0.05,
    };
    let ep = family
        .sample_episode(&model, &mut rng_from_seed(SEED ^ 2))
        .expect("default family is certifiable");
    let p = HistoryEncoding::ZeroPadded.input_dim(horizon, family.d_x);
    (ep, two_layer(p, family.d_u, m))
}
