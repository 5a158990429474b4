//! Environments: the Color Maze and the PointGap continuous toy.

pub mod color_maze;
pub mod maze;
pub mod pointgap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::Tensor2D;

pub use color_maze::{ColorMazeBatch, MazeEnv, MazeState};
pub use maze::{generate_path, Cell, MazeDims, MazeLayout, Pos};
pub use pointgap::{PointGapBatch, PointGapConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Success,
    Fail,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpace {
    /// Width of the decoder output: logits or means.
    pub fn decoder_width(self) -> usize {
        match self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionBatch {
    Discrete(Vec<usize>),
    Continuous(Tensor2D),
}

impl ActionBatch {
    pub fn len(&self) -> usize {
        match self {
            ActionBatch::Discrete(a) => a.len(),
            ActionBatch::Continuous(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        match self {
            ActionBatch::Discrete(a) => ActionBatch::Discrete(indices.iter().map(|&i| a[i]).collect()),
            ActionBatch::Continuous(t) => ActionBatch::Continuous(t.select_rows(indices)),
        }
    }

    /// Concatenates batches of the same kind in order.
    pub fn concat(parts: &[ActionBatch]) -> Result<Self> {
        match parts.first() {
            None => Ok(ActionBatch::Discrete(Vec::new())),
            Some(ActionBatch::Discrete(_)) => {
                let mut out = Vec::new();
                for p in parts {
                    match p {
                        ActionBatch::Discrete(a) => out.extend_from_slice(a),
                        ActionBatch::Continuous(_) => return Err(mixed()),
                    }
                }
                Ok(ActionBatch::Discrete(out))
            }
            Some(ActionBatch::Continuous(_)) => {
                let mut ts = Vec::with_capacity(parts.len());
                for p in parts {
                    match p {
                        ActionBatch::Continuous(t) => ts.push(t),
                        ActionBatch::Discrete(_) => return Err(mixed()),
                    }
                }
                Ok(ActionBatch::Continuous(Tensor2D::vstack(&ts)?))
            }
        }
    }
}

fn mixed() -> crate::Error {
    crate::Error::InvalidArgument("cannot mix discrete and continuous actions".into())
}

/// Paired observations for every environment in a batch (row `i` = env `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub teacher: Tensor2D,
    pub student: Tensor2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub obs: ObservationBatch,
    /// Task reward of the transition (no KL shaping).
    pub reward: Vec<f64>,
    pub done: Vec<bool>,
    pub outcome: Vec<Outcome>,
}

/// A batch of independent environments stepped in lockstep with auto-reset.
pub trait VecEnv {
    fn num_envs(&self) -> usize;
    fn teacher_obs_dim(&self) -> usize;
    fn student_obs_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn reset_all(&mut self) -> ObservationBatch;
    fn observe(&self) -> ObservationBatch;
    fn step(&mut self, actions: &ActionBatch) -> Result<StepOutput>;
    /// Serializable copy of all mutable state, for checkpoints.
    fn snapshot(&self) -> Result<serde_json::Value>;
    fn restore(&mut self, snapshot: &serde_json::Value) -> Result<()>;
}
