//! Deterministic evaluation: distribution-mode actions on fixed episode sets.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::envs::color_maze::MazeEnv;
use crate::envs::pointgap::{PointGapBatch, PointGapConfig, PointGapState};
use crate::envs::{ActionBatch, MazeDims, MazeLayout, Outcome, Pos, VecEnv};
use crate::error::Result;
use crate::nn::Tensor2D;
use crate::policy::{Actor, PolicyBundle};
use crate::rng::{self, Stream};

/// Episodes an evaluation runs.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSet {
    Maze {
        layouts: Vec<MazeLayout>,
        horizon: u32,
    },
    PointGap {
        config: PointGapConfig,
        states: Vec<PointGapState>,
    },
}

impl EvalSet {
    /// `count` held-out layouts drawn from the evaluation-layout stream of `root_seed`.
    pub fn maze_heldout(root_seed: u64, dims: MazeDims, count: usize, horizon: u32) -> Result<Self> {
        Ok(EvalSet::Maze {
            layouts: layout_set(root_seed, Stream::EvalLayouts, dims, count)?,
            horizon,
        })
    }

    /// `count` PointGap start states drawn from the evaluation stream of `root_seed`.
    pub fn pointgap_heldout(root_seed: u64, config: PointGapConfig, count: usize) -> Result<Self> {
        let b = PointGapBatch::new(config, count, rng::stream(root_seed, Stream::EvalLayouts).next_u64())?;
        Ok(EvalSet::PointGap {
            config,
            states: b.states().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        match self {
            EvalSet::Maze { layouts, .. } => layouts.len(),
            EvalSet::PointGap { states, .. } => states.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layouts whose seeds are successive `u64` draws from `stream` of `root_seed`.
pub fn layout_set(root_seed: u64, stream: Stream, dims: MazeDims, count: usize) -> Result<Vec<MazeLayout>> {
    let mut r = rng::stream(root_seed, stream);
    (0..count)
        .map(|_| crate::envs::generate_path(r.next_u64(), dims))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub outcome: Outcome,
    pub task_return: f64,
    pub discounted_return: f64,
    pub length: u32,
    pub max_abs_reward: f64,
    /// Visited cells including the start (maze only).
    pub positions: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub episodes: Vec<EpisodeRecord>,
    pub success_rate: f64,
    /// Population standard deviation of the per-episode success indicator.
    pub success_std: f64,
    pub mean_return: f64,
    pub mean_discounted_return: f64,
}

impl EvalResult {
    fn from_episodes(episodes: Vec<EpisodeRecord>) -> Self {
        let n = episodes.len().max(1) as f64;
        let s: Vec<f64> = episodes
            .iter()
            .map(|e| if e.outcome == Outcome::Success { 1.0 } else { 0.0 })
            .collect();
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            success_rate: mean,
            success_std: var.sqrt(),
            mean_return: episodes.iter().map(|e| e.task_return).sum::<f64>() / n,
            mean_discounted_return: episodes.iter().map(|e| e.discounted_return).sum::<f64>() / n,
            episodes,
        }
    }
}

/// Runs one deterministic episode per layout (or start state) with `actor`
/// choosing the distribution mode at every step.
pub fn evaluate(bundle: &PolicyBundle, actor: Actor, set: &EvalSet, gamma: f64) -> Result<EvalResult> {
    match set {
        EvalSet::Maze { layouts, horizon } => {
            let envs: Vec<MazeEnv> = layouts.iter().map(|l| MazeEnv::new(l.clone(), *horizon)).collect();
            evaluate_maze(bundle, actor, envs, gamma)
        }
        EvalSet::PointGap { config, states } => evaluate_pointgap(bundle, actor, *config, states, gamma),
    }
}

/// Success rate of `actor` on a set of maze layouts.
pub fn evaluate_success_rate(
    bundle: &PolicyBundle,
    actor: Actor,
    layouts: &[MazeLayout],
    horizon: u32,
) -> Result<(f64, f64)> {
    let r = evaluate(
        bundle,
        actor,
        &EvalSet::Maze {
            layouts: layouts.to_vec(),
            horizon,
        },
        1.0,
    )?;
    Ok((r.success_rate, r.success_std))
}

fn evaluate_maze(bundle: &PolicyBundle, actor: Actor, mut envs: Vec<MazeEnv>, gamma: f64) -> Result<EvalResult> {
    evaluate_maze_with(&mut envs, gamma, |obs_rows| {
        let obs = stack_obs(actor, obs_rows)?;
        match bundle.dist(actor, &obs)?.mode() {
            ActionBatch::Discrete(a) => Ok(a),
            ActionBatch::Continuous(_) => Err(crate::Error::InvalidArgument("maze needs a discrete policy".into())),
        }
    })
}

/// Observations handed to a maze policy callback: the environments still running.
pub struct MazeObs<'a> {
    pub envs: Vec<&'a MazeEnv>,
}

fn stack_obs(actor: Actor, obs: MazeObs<'_>) -> Result<Tensor2D> {
    let rows: Vec<Vec<f64>> = obs
        .envs
        .iter()
        .map(|e| match actor {
            Actor::Student => e.student_observation().to_vec(),
            Actor::Teacher | Actor::Proxy => e.teacher_observation().to_vec(),
        })
        .collect();
    Tensor2D::from_rows(&rows)
}

/// Steps every maze to termination, asking `policy` for the actions of the
/// environments still running. Works for any deterministic controller.
pub fn evaluate_maze_with(
    envs: &mut [MazeEnv],
    gamma: f64,
    mut policy: impl FnMut(MazeObs<'_>) -> Result<Vec<usize>>,
) -> Result<EvalResult> {
    let mut records: Vec<EpisodeRecord> = envs
        .iter_mut()
        .map(|e| {
            e.reset();
            EpisodeRecord {
                outcome: Outcome::Running,
                task_return: 0.0,
                discounted_return: 0.0,
                length: 0,
                max_abs_reward: 0.0,
                positions: vec![e.state.pos],
            }
        })
        .collect();
    let mut discount = vec![1.0; envs.len()];
    loop {
        let active: Vec<usize> = (0..envs.len())
            .filter(|&i| records[i].outcome == Outcome::Running)
            .collect();
        if active.is_empty() {
            break;
        }
        let actions = policy(MazeObs {
            envs: active.iter().map(|&i| &envs[i]).collect(),
        })?;
        for (&i, &a) in active.iter().zip(&actions) {
            let t = envs[i].step(a)?;
            let r = &mut records[i];
            r.task_return += t.reward;
            r.discounted_return += discount[i] * t.reward;
            r.max_abs_reward = r.max_abs_reward.max(t.reward.abs());
            r.length += 1;
            r.outcome = t.outcome;
            r.positions.push(envs[i].state.pos);
            discount[i] *= gamma;
        }
    }
    Ok(EvalResult::from_episodes(records))
}

fn evaluate_pointgap(
    bundle: &PolicyBundle,
    actor: Actor,
    config: PointGapConfig,
    states: &[PointGapState],
    gamma: f64,
) -> Result<EvalResult> {
    let mut batch = PointGapBatch::from_states(config, states.to_vec(), 0);
    let n = states.len();
    let mut records: Vec<EpisodeRecord> = (0..n)
        .map(|_| EpisodeRecord {
            outcome: Outcome::Running,
            task_return: 0.0,
            discounted_return: 0.0,
            length: 0,
            max_abs_reward: 0.0,
            positions: Vec::new(),
        })
        .collect();
    let mut discount = vec![1.0; n];
    let mut obs = batch.observe();
    while records.iter().any(|r| r.outcome == Outcome::Running) {
        let input = match actor {
            Actor::Student => &obs.student,
            Actor::Teacher | Actor::Proxy => &obs.teacher,
        };
        let actions = bundle.dist(actor, input)?.mode();
        let out = batch.step(&actions)?;
        for (i, r) in records.iter_mut().enumerate() {
            if r.outcome != Outcome::Running {
                continue;
            }
            r.task_return += out.reward[i];
            r.discounted_return += discount[i] * out.reward[i];
            r.max_abs_reward = r.max_abs_reward.max(out.reward[i].abs());
            r.length += 1;
            r.outcome = out.outcome[i];
            discount[i] *= gamma;
        }
        obs = out.obs;
    }
    Ok(EvalResult::from_episodes(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Walks the border: sideways off the maze column, up past the region, then over to the goal.
    fn border_route(e: &MazeEnv) -> usize {
        let (p, g, r) = (e.state.pos, e.layout.goal(), e.layout.region());
        let beside = p.x < r.x0 || p.x >= r.x0 + r.w;
        if p.y > g.y && !beside {
            return 3;
        }
        if p.y > g.y {
            return 0;
        }
        if p.x < g.x {
            1
        } else {
            3
        }
    }

    #[test]
    fn scripted_border_route_always_succeeds() {
        let layouts = layout_set(1, Stream::EvalLayouts, MazeDims::scaled(), 15).unwrap();
        let mut envs: Vec<MazeEnv> = layouts.into_iter().map(|l| MazeEnv::new(l, 300)).collect();
        let r = evaluate_maze_with(&mut envs, 0.99, |o| {
            Ok(o.envs.iter().map(|e| border_route(e)).collect())
        })
        .unwrap();
        assert_eq!(r.success_rate, 1.0);
        assert_eq!(r.success_std, 0.0);
    }

    #[test]
    fn heldout_sets_are_reproducible() {
        let a = EvalSet::maze_heldout(5, MazeDims::scaled(), 15, 300).unwrap();
        let b = EvalSet::maze_heldout(5, MazeDims::scaled(), 15, 300).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
    }
}
