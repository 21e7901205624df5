//! Shared fixtures for the criterion benchmarks.

use aggnet_core::experiment::{build_topology, ExperimentConfig};
use aggnet_core::rng::stream;
use aggnet_core::sim::{Environment, Observation};
use aggnet_core::FilterTensor;

/// Default configuration resized to `m` nodes.
pub fn config(m: usize) -> ExperimentConfig {
    ExperimentConfig::for_size(m)
}

/// Environment warmed up for `hops` steps so aggregation buffers are full.
pub fn warm_environment(m: usize) -> (Environment, Observation) {
    let cfg = config(m);
    let topo = build_topology(&cfg).expect("default topology");
    let mut env = Environment::new(topo.pathloss, &cfg.env_config(cfg.seed_for(stream::FADING))).expect("environment");
    let mut obs = env.step().expect("step");
    for _ in 1..cfg.hops {
        obs = env.step().expect("step");
    }
    (env, obs)
}

pub fn default_filter() -> FilterTensor {
    config(25).initial_filter().expect("initial filter")
}
