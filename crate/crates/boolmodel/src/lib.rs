//! Simulation library for the Poisson Boolean model on `R^d`: a Poisson
//! cloud of centers, each carrying an independent random radius, occupying
//! space with the union of the resulting open balls.
//!
//! The crate provides exact window samplers (including the size-biased law of
//! balls merely touching a window), the intersection graph of a sample,
//! per-realization cluster observables (volume, ball count, diameter, chain
//! length, crossing indicators), and deterministic parallel experiment
//! drivers on top of them. Every random quantity is a pure function of a
//! [`sampler::SeedPath`], so results do not depend on thread scheduling.

pub mod experiments;
pub mod graph;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod sampler;

pub use model::{Moment, ModelError, ModelParams, RadiusDistribution, Window};
pub use sampler::{Ball, BallSample, SampleError, SamplingMode, SeedPath};

/// Library version string, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
