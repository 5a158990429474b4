use serde::{Deserialize, Serialize};

use super::{compute_gae, normalize_advantages, PpoConfig};
use crate::envs::{ActionBatch, Outcome};
use crate::error::{Error, Result};
use crate::nn::Tensor2D;

/// One roll-out step across all environments.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub teacher_obs: Tensor2D,
    pub student_obs: Tensor2D,
    pub actions: ActionBatch,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub task_rewards: Vec<f64>,
    /// Per-env `KL(teacher ‖ proxy)` before weighting.
    pub kl: Vec<f64>,
    pub dones: Vec<bool>,
    pub outcomes: Vec<Outcome>,
}

/// Fixed-capacity on-policy storage, step-major (`row = t · n_envs + e`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub n_steps: usize,
    pub n_envs: usize,
    pub lambda1: f64,
    pub teacher_obs: Tensor2D,
    pub student_obs: Tensor2D,
    pub actions: ActionBatch,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub task_rewards: Vec<f64>,
    pub kl: Vec<f64>,
    /// `λ₁ · KL`, the amount subtracted from each task reward.
    pub kl_penalty: Vec<f64>,
    /// Shaped rewards `r′ = r − λ₁ · KL`.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub outcomes: Vec<Outcome>,
    pub last_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    /// Assembles a buffer from exactly `n_steps` step records.
    pub fn from_steps(steps: Vec<StepRecord>, last_values: Vec<f64>, lambda1: f64) -> Result<Self> {
        let n_steps = steps.len();
        let n_envs = last_values.len();
        if n_steps == 0 || n_envs == 0 {
            return Err(Error::InvalidArgument("empty roll-out".into()));
        }
        for s in &steps {
            if s.log_probs.len() != n_envs || s.teacher_obs.rows() != n_envs || s.actions.len() != n_envs {
                return Err(Error::Shape {
                    context: "RolloutBuffer step",
                    expected: (n_envs, s.teacher_obs.cols()),
                    actual: s.teacher_obs.shape(),
                });
            }
        }
        let teacher_obs = Tensor2D::vstack(&steps.iter().map(|s| &s.teacher_obs).collect::<Vec<_>>())?;
        let student_obs = Tensor2D::vstack(&steps.iter().map(|s| &s.student_obs).collect::<Vec<_>>())?;
        let actions = ActionBatch::concat(&steps.iter().map(|s| s.actions.clone()).collect::<Vec<_>>())?;
        let cat = |f: &dyn Fn(&StepRecord) -> &Vec<f64>| {
            steps.iter().flat_map(|s| f(s).iter().copied()).collect::<Vec<f64>>()
        };
        let log_probs = cat(&|s| &s.log_probs);
        let values = cat(&|s| &s.values);
        let task_rewards = cat(&|s| &s.task_rewards);
        let kl = cat(&|s| &s.kl);
        let kl_penalty: Vec<f64> = kl.iter().map(|k| lambda1 * k).collect();
        let rewards = task_rewards
            .iter()
            .zip(&kl)
            .map(|(&r, &k)| super::shape_reward(r, k, lambda1))
            .collect();
        let dones = steps.iter().flat_map(|s| s.dones.iter().copied()).collect();
        let outcomes = steps.iter().flat_map(|s| s.outcomes.iter().copied()).collect();
        let len = n_steps * n_envs;
        Ok(Self {
            n_steps,
            n_envs,
            lambda1,
            teacher_obs,
            student_obs,
            actions,
            log_probs,
            values,
            task_rewards,
            kl,
            kl_penalty,
            rewards,
            dones,
            outcomes,
            last_values,
            advantages: vec![0.0; len],
            returns: vec![0.0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills advantages (normalized per whole buffer when configured) and returns.
    pub fn compute_advantages(&mut self, cfg: &PpoConfig) -> Result<()> {
        let (mut adv, ret) = compute_gae(
            &self.rewards,
            &self.values,
            &self.dones,
            &self.last_values,
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        if adv.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numerical("non-finite advantage".into()));
        }
        if cfg.normalize_advantages {
            normalize_advantages(&mut adv);
        }
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }
}
