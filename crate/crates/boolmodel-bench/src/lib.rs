//! Shared fixtures for the pipeline benchmarks: deterministic samples at a
//! few sizes so every benchmark measures the same inputs.

use boolmodel::sampler::sample_touching;
use boolmodel::{Ball, ModelParams, RadiusDistribution, SeedPath, Window};

/// A planar constant-radius model at the given intensity.
pub fn disk_params(lambda: f64) -> ModelParams {
    ModelParams::new(2, lambda, RadiusDistribution::Constant { value: 1.0 })
        .expect("valid benchmark parameters")
}

/// A planar heavy-tailed model with finite volume second moment.
pub fn pareto_params(lambda: f64) -> ModelParams {
    ModelParams::new(2, lambda, RadiusDistribution::Pareto { scale: 1.0, exponent: 5.0 })
        .expect("valid benchmark parameters")
}

/// One deterministic touching sample on a ball window.
pub fn fixture_balls(params: &ModelParams, window_radius: f64, seed: u64) -> Vec<Ball> {
    sample_touching(params, Window::Ball { radius: window_radius }, SeedPath::root(seed))
        .expect("benchmark sampling never fails")
        .balls()
        .to_vec()
}
