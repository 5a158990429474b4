//! Helpers shared by the integration tests and the acceptance harness.

#![allow(dead_code)]

pub mod env;
pub mod grad;

use sitt_core::config::RunConfig;

/// A tiny maze configuration that trains in seconds.
pub fn tiny_config(seed: u64) -> RunConfig {
    let mut c = RunConfig::default();
    c.run.seed = seed;
    c.env.num_envs = 4;
    c.env.eval_layouts = 3;
    c.env.horizon = 40;
    c.net.encoder_hidden = vec![16];
    c.net.feature_dim = 8;
    c.net.critic_hidden = vec![16];
    c.sitt.iterations = 3;
    c.sitt.rollout_steps = 16;
    c.sitt.alignment_iters = 3;
    c.sitt.eval_interval = 2;
    c.ppo.epochs = 2;
    c.ppo.minibatches = 2;
    c.baseline.collect_steps = 128;
    c.baseline.dagger_iterations = 2;
    c.baseline.refit_steps = 3;
    c
}
