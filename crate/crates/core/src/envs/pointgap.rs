//! PointGap: a continuous occluded-obstacle toy.
//!
//! The agent moves forward at constant speed along a corridor of length
//! `length` and steers laterally. One obstacle (a wall segment of half-width
//! `obstacle_half_width` centered at lateral offset `oy`) sits at forward
//! position `ox`. Crossing the obstacle line while laterally inside the
//! segment is a collision.
//!
//! * Action: one value, the lateral velocity command, clipped to `[−1, 1]` and
//!   scaled by `lateral_step`. Lateral position is clamped to `[−1, 1]`.
//! * Reward: forward progress `speed / length` per step, minus
//!   `collision_penalty` on collision (which ends the episode as a failure).
//!   Reaching `length` ends the episode as a success.
//! * Teacher observation `[y, x/length, (ox − x)/length, oy − y]`.
//! * Student observation is the same except both obstacle channels read 0
//!   unless the obstacle lies ahead within `fov`, i.e. `0 ≤ ox − x ≤ fov`.
//!
//! Obstacle placement is redrawn from the environment's own ChaCha8 stream at
//! every reset: `ox ~ U[obstacle_min, obstacle_max]`, `oy ~ U[−max_offset, max_offset]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ActionBatch, ActionSpace, ObservationBatch, Outcome, StepOutput, VecEnv};
use crate::error::{Error, Result};
use crate::nn::Tensor2D;
use crate::rng::{self, Stream};

pub const OBS_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointGapConfig {
    pub length: f64,
    pub speed: f64,
    pub lateral_step: f64,
    pub obstacle_half_width: f64,
    pub obstacle_min: f64,
    pub obstacle_max: f64,
    pub max_offset: f64,
    pub fov: f64,
    pub collision_penalty: f64,
    pub horizon: u32,
}

impl Default for PointGapConfig {
    fn default() -> Self {
        Self {
            length: 10.0,
            speed: 0.5,
            lateral_step: 0.25,
            obstacle_half_width: 0.35,
            obstacle_min: 4.0,
            obstacle_max: 8.0,
            max_offset: 0.5,
            fov: 2.0,
            collision_penalty: 1.0,
            horizon: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointGapState {
    pub x: f64,
    pub y: f64,
    pub ox: f64,
    pub oy: f64,
    pub steps: u32,
}

impl PointGapState {
    pub fn teacher_obs(&self, cfg: &PointGapConfig) -> [f64; OBS_DIM] {
        [
            self.y,
            self.x / cfg.length,
            (self.ox - self.x) / cfg.length,
            self.oy - self.y,
        ]
    }

    pub fn student_obs(&self, cfg: &PointGapConfig) -> [f64; OBS_DIM] {
        let mut o = self.teacher_obs(cfg);
        let ahead = self.ox - self.x;
        if !(0.0..=cfg.fov).contains(&ahead) {
            o[2] = 0.0;
            o[3] = 0.0;
        }
        o
    }

    /// Advances one step; returns `(reward, outcome)`.
    pub fn advance(&mut self, cfg: &PointGapConfig, action: f64) -> (f64, Outcome) {
        let a = action.clamp(-1.0, 1.0);
        self.y = (self.y + cfg.lateral_step * a).clamp(-1.0, 1.0);
        let x_new = self.x + cfg.speed;
        let crossed = self.x < self.ox && self.ox <= x_new;
        let hit = crossed && (self.y - self.oy).abs() < cfg.obstacle_half_width;
        self.x = x_new;
        self.steps += 1;
        let progress = cfg.speed / cfg.length;
        if hit {
            return (progress - cfg.collision_penalty, Outcome::Fail);
        }
        if self.x >= cfg.length {
            return (progress, Outcome::Success);
        }
        if self.steps >= cfg.horizon {
            return (progress, Outcome::Truncated);
        }
        (progress, Outcome::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointGapBatch {
    pub config: PointGapConfig,
    states: Vec<PointGapState>,
    rng: rng::Rng,
}

impl PointGapBatch {
    pub fn new(config: PointGapConfig, num_envs: usize, seed: u64) -> Result<Self> {
        if config.obstacle_min > config.obstacle_max || config.speed <= 0.0 || config.length <= 0.0 {
            return Err(Error::Config("invalid PointGap geometry".into()));
        }
        let mut b = Self {
            config,
            states: Vec::with_capacity(num_envs),
            rng: rng::stream(seed, Stream::Env),
        };
        for _ in 0..num_envs {
            let s = b.fresh_state();
            b.states.push(s);
        }
        Ok(b)
    }

    /// Builds a batch with explicit states (used for scripted checks).
    pub fn from_states(config: PointGapConfig, states: Vec<PointGapState>, seed: u64) -> Self {
        Self {
            config,
            states,
            rng: rng::stream(seed, Stream::Env),
        }
    }

    pub fn states(&self) -> &[PointGapState] {
        &self.states
    }

    fn fresh_state(&mut self) -> PointGapState {
        let c = self.config;
        PointGapState {
            x: 0.0,
            y: 0.0,
            ox: self.rng.random_range(c.obstacle_min..=c.obstacle_max),
            oy: self.rng.random_range(-c.max_offset..=c.max_offset),
            steps: 0,
        }
    }
}

impl VecEnv for PointGapBatch {
    fn num_envs(&self) -> usize {
        self.states.len()
    }

    fn teacher_obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn student_obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(1)
    }

    fn reset_all(&mut self) -> ObservationBatch {
        for i in 0..self.states.len() {
            self.states[i] = self.fresh_state();
        }
        self.observe()
    }

    fn observe(&self) -> ObservationBatch {
        let n = self.states.len();
        let t: Vec<f64> = self.states.iter().flat_map(|s| s.teacher_obs(&self.config)).collect();
        let s: Vec<f64> = self.states.iter().flat_map(|s| s.student_obs(&self.config)).collect();
        ObservationBatch {
            teacher: Tensor2D::from_vec(n, OBS_DIM, t).expect("shape"),
            student: Tensor2D::from_vec(n, OBS_DIM, s).expect("shape"),
        }
    }

    fn step(&mut self, actions: &ActionBatch) -> Result<StepOutput> {
        let ActionBatch::Continuous(a) = actions else {
            return Err(Error::InvalidArgument("PointGap takes continuous actions".into()));
        };
        a.check_shape("PointGapBatch::step actions", (self.states.len(), 1))?;
        let n = self.states.len();
        let (mut reward, mut done, mut outcome) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let cfg = self.config;
        for i in 0..n {
            let (r, o) = self.states[i].advance(&cfg, a.get(i, 0));
            reward.push(r);
            done.push(o != Outcome::Running);
            outcome.push(o);
            if o != Outcome::Running {
                self.states[i] = self.fresh_state();
            }
        }
        Ok(StepOutput {
            obs: self.observe(),
            reward,
            done,
            outcome,
        })
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn restore(&mut self, snapshot: &serde_json::Value) -> Result<()> {
        *self = serde_json::from_value(snapshot.clone())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(ox: f64, oy: f64) -> PointGapState {
        PointGapState {
            x: 0.0,
            y: 0.0,
            ox,
            oy,
            steps: 0,
        }
    }

    #[test]
    fn fov_gates_student_obstacle_channels() {
        let cfg = PointGapConfig::default();
        let near = PointGapState {
            x: 3.0,
            ..state(4.5, 0.2)
        };
        assert_eq!(near.student_obs(&cfg), near.teacher_obs(&cfg));
        let far = state(6.0, 0.2);
        let s = far.student_obs(&cfg);
        assert_eq!((s[2], s[3]), (0.0, 0.0));
        assert_ne!(far.teacher_obs(&cfg)[2], 0.0);
    }

    #[test]
    fn scripted_ten_step_trace() {
        // Obstacle at x = 4.2 centered at y = 0.1, half-width 0.35. Steering
        // up (+1) for the first two steps puts y at 0.5, clear of [−0.25, 0.45].
        let cfg = PointGapConfig::default();
        let mut s = state(4.2, 0.1);
        let script = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut trace = Vec::new();
        for a in script {
            let (r, o) = s.advance(&cfg, a);
            trace.push((s.x, s.y, r, o));
        }
        // By hand: x advances 0.5 per step; y = 0.25, 0.5, then constant.
        let want_y = [0.25, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        for (k, &(x, y, r, o)) in trace.iter().enumerate() {
            assert!((x - 0.5 * (k as f64 + 1.0)).abs() < 1e-12);
            assert!((y - want_y[k]).abs() < 1e-12);
            assert!((r - 0.05).abs() < 1e-12);
            assert_eq!(o, Outcome::Running);
        }
        // The same script without steering collides on step 9 (x: 4.0 → 4.5 crosses 4.2).
        let mut s = state(4.2, 0.1);
        let mut last = (0.0, Outcome::Running);
        for k in 0..9 {
            last = s.advance(&cfg, 0.0);
            if k < 8 {
                assert_eq!(last.1, Outcome::Running);
            }
        }
        assert_eq!(last.1, Outcome::Fail);
        assert!((last.0 - (0.05 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn reaching_the_end_succeeds_and_actions_are_clipped() {
        let cfg = PointGapConfig {
            horizon: 100,
            ..PointGapConfig::default()
        };
        let mut s = state(4.2, 0.9);
        let mut out = Outcome::Running;
        let mut n = 0;
        while out == Outcome::Running {
            out = s.advance(&cfg, -5.0).1;
            n += 1;
        }
        assert_eq!(out, Outcome::Success);
        assert_eq!(n, 20);
        assert_eq!(s.y, -1.0);
    }

    #[test]
    fn batch_is_deterministic_per_seed() {
        let a = PointGapBatch::new(PointGapConfig::default(), 4, 9).unwrap();
        let b = PointGapBatch::new(PointGapConfig::default(), 4, 9).unwrap();
        assert_eq!(a.states(), b.states());
        assert_eq!(a.observe(), b.observe());
    }
}
