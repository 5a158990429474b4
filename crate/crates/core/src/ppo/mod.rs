//! Clipped PPO with the teacher/proxy KL terms: roll-out storage, GAE,
//! reward shaping and the combined teacher loss.

pub mod buffer;
pub mod loss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use buffer::RolloutBuffer;
pub use loss::{kl_loss, ppo_teacher_loss, LossReport, Minibatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub lr: f64,
    /// Passes over the roll-out buffer per update phase.
    pub epochs: usize,
    /// Minibatches per pass; 1 means one full-batch step.
    pub minibatches: usize,
    /// Joint gradient-norm cap over the updated parameters; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub normalize_advantages: bool,
    /// Reward-side KL weight (λ₁).
    pub lambda1: f64,
    /// Loss-side KL weight (λ₂).
    pub lambda2: f64,
    /// Let the λ₂ term also update the shared decoder (ablation switch).
    pub kl_to_decoder: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            ent_coef: 0.3,
            vf_coef: 0.5,
            lr: 3e-4,
            epochs: 10,
            minibatches: 4,
            max_grad_norm: Some(0.5),
            normalize_advantages: true,
            lambda1: 1.9,
            lambda2: 0.001,
            kl_to_decoder: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("ppo.gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("ppo.gae_lambda must lie in [0, 1]");
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("ppo.lambda1 and ppo.lambda2 must be non-negative");
        }
        if self.clip <= 0.0 || self.lr <= 0.0 {
            return bad("ppo.clip and ppo.lr must be positive");
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return bad("ppo.epochs and ppo.minibatches must be at least 1");
        }
        if matches!(self.max_grad_norm, Some(m) if m <= 0.0) {
            return bad("ppo.max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// `r′ = r − λ₁ · KL`.
pub fn shape_reward(task_reward: f64, kl: f64, lambda1: f64) -> f64 {
    task_reward - lambda1 * kl
}

/// Generalized advantage estimation over a step-major buffer (`index = t · n_envs + e`).
///
/// `dones[i]` marks that transition `i` ended its episode, so the value of the
/// following observation is not bootstrapped. `last_values` are the values of
/// the observations after the final step. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_envs = last_values.len();
    let len = rewards.len();
    if n_envs == 0 || len % n_envs != 0 || values.len() != len || dones.len() != len {
        return Err(Error::Shape {
            context: "compute_gae",
            expected: (len, n_envs),
            actual: (values.len(), dones.len()),
        });
    }
    let steps = len / n_envs;
    let mut adv = vec![0.0; len];
    for e in 0..n_envs {
        let mut gae = 0.0;
        for t in (0..steps).rev() {
            let i = t * n_envs + e;
            let next_value = if t + 1 == steps {
                last_values[e]
            } else {
                values[i + n_envs]
            };
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            gae = delta + gamma * lambda * live * gae;
            adv[i] = gae;
        }
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Standardizes to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
