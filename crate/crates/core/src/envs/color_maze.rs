//! Vectorized Color Maze.
//!
//! Actions: 0 up, 1 right, 2 down, 3 left. A move that would leave the grid
//! keeps the agent in place (reward 0). Entering a Path cell for the first time
//! pays `+0.5`, re-entering one costs `0.5`, Lava ends the episode with `−0.1`
//! and the Goal ends it with `+10`. Episodes longer than the horizon are
//! truncated without penalty.
//!
//! Teacher observation (20 values): goal offset `(gx − x, gy − y)` divided by
//! the grid size, a 4-way one-hot `[Empty, Lava, Path, Goal]` for each
//! neighbor in up/right/down/left order, and the last movement `(dx, dy)`.
//! The student observation (16 values) is identical except that neighbor
//! classes are `[Empty, Occupied, Goal]` with Lava and Path both Occupied.
//! Off-grid neighbors encode as all zeros in both.

use serde::{Deserialize, Serialize};

use super::maze::{neighbors, Cell, MazeLayout, Pos};
use super::{ActionBatch, ActionSpace, ObservationBatch, Outcome, StepOutput, VecEnv};
use crate::error::{Error, Result};
use crate::nn::Tensor2D;

pub const NUM_ACTIONS: usize = 4;
pub const TEACHER_OBS_DIM: usize = 2 + 4 * 4 + 2;
pub const STUDENT_OBS_DIM: usize = 2 + 4 * 3 + 2;
pub const DEFAULT_HORIZON: u32 = 300;

pub const REWARD_SUCCESS: f64 = 10.0;
pub const REWARD_PATH: f64 = 0.5;
pub const PENALTY_REVISIT: f64 = 0.5;
pub const PENALTY_FAIL: f64 = 0.1;

pub const MOVES: [(i32, i32); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeacherClass {
    Empty = 0,
    Lava = 1,
    Path = 2,
    Goal = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudentClass {
    Empty = 0,
    Occupied = 1,
    Goal = 2,
}

impl From<Cell> for TeacherClass {
    fn from(c: Cell) -> Self {
        match c {
            Cell::Empty => TeacherClass::Empty,
            Cell::Lava => TeacherClass::Lava,
            Cell::Path => TeacherClass::Path,
            Cell::Goal => TeacherClass::Goal,
        }
    }
}

/// The student's coarsening of the teacher's cell classes.
pub fn collapse(c: TeacherClass) -> StudentClass {
    match c {
        TeacherClass::Empty => StudentClass::Empty,
        TeacherClass::Lava | TeacherClass::Path => StudentClass::Occupied,
        TeacherClass::Goal => StudentClass::Goal,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeState {
    pub pos: Pos,
    pub prev: Pos,
    /// One bit per grid cell; only Path cells are ever set.
    visited: Vec<u64>,
    pub steps: u32,
    pub outcome: Outcome,
}

impl MazeState {
    pub fn at_start(layout: &MazeLayout) -> Self {
        let n = layout.width() * layout.height();
        Self {
            pos: layout.start(),
            prev: layout.start(),
            visited: vec![0; n.div_ceil(64)],
            steps: 0,
            outcome: Outcome::Running,
        }
    }

    pub fn is_visited(&self, idx: usize) -> bool {
        self.visited[idx / 64] >> (idx % 64) & 1 == 1
    }

    fn mark(&mut self, idx: usize) {
        self.visited[idx / 64] |= 1 << (idx % 64);
    }

    pub fn visited_count(&self) -> u32 {
        self.visited.iter().map(|w| w.count_ones()).sum()
    }

    pub fn movement(&self) -> (i32, i32) {
        (self.pos.x - self.prev.x, self.pos.y - self.prev.y)
    }
}

/// Result of one transition of a single maze.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub outcome: Outcome,
    /// The cell entered, `None` when the move was blocked by the grid edge.
    pub entered: Option<Cell>,
    pub revisit: bool,
}

/// A single maze episode: fixed layout plus mutable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeEnv {
    pub layout: MazeLayout,
    pub state: MazeState,
    pub horizon: u32,
}

impl MazeEnv {
    pub fn new(layout: MazeLayout, horizon: u32) -> Self {
        let state = MazeState::at_start(&layout);
        Self { layout, state, horizon }
    }

    pub fn reset(&mut self) {
        self.state = MazeState::at_start(&self.layout);
    }

    pub fn step(&mut self, action: usize) -> Result<Transition> {
        if action >= NUM_ACTIONS {
            return Err(Error::InvalidArgument(format!("maze action {action} not in 0..4")));
        }
        if self.state.outcome != Outcome::Running {
            return Err(Error::InvalidArgument("step on a finished maze episode".into()));
        }
        let (dx, dy) = MOVES[action];
        let target = Pos::new(self.state.pos.x + dx, self.state.pos.y + dy);
        self.state.steps += 1;
        let mut t = Transition {
            reward: 0.0,
            outcome: Outcome::Running,
            entered: None,
            revisit: false,
        };
        self.state.prev = self.state.pos;
        if let Some(cell) = self.layout.cell(target) {
            self.state.pos = target;
            t.entered = Some(cell);
            match cell {
                Cell::Goal => {
                    t.reward = REWARD_SUCCESS;
                    t.outcome = Outcome::Success;
                }
                Cell::Lava => {
                    t.reward = -PENALTY_FAIL;
                    t.outcome = Outcome::Fail;
                }
                Cell::Path => {
                    let idx = self.layout.index(target);
                    if self.state.is_visited(idx) {
                        t.reward = -PENALTY_REVISIT;
                        t.revisit = true;
                    } else {
                        self.state.mark(idx);
                        t.reward = REWARD_PATH;
                    }
                }
                Cell::Empty => {}
            }
        }
        if t.outcome == Outcome::Running && self.state.steps >= self.horizon {
            t.outcome = Outcome::Truncated;
        }
        self.state.outcome = t.outcome;
        Ok(t)
    }

    pub fn teacher_observation(&self) -> [f64; TEACHER_OBS_DIM] {
        teacher_observation(&self.state, &self.layout)
    }

    pub fn student_observation(&self) -> [f64; STUDENT_OBS_DIM] {
        student_observation(&self.state, &self.layout)
    }
}

fn common_head(state: &MazeState, layout: &MazeLayout) -> [f64; 2] {
    let g = layout.goal();
    [
        (g.x - state.pos.x) as f64 / layout.width() as f64,
        (g.y - state.pos.y) as f64 / layout.height() as f64,
    ]
}

pub fn teacher_observation(state: &MazeState, layout: &MazeLayout) -> [f64; TEACHER_OBS_DIM] {
    let mut o = [0.0; TEACHER_OBS_DIM];
    o[..2].copy_from_slice(&common_head(state, layout));
    for (k, n) in neighbors(state.pos).into_iter().enumerate() {
        if let Some(c) = layout.cell(n) {
            o[2 + 4 * k + TeacherClass::from(c) as usize] = 1.0;
        }
    }
    let (dx, dy) = state.movement();
    o[18] = dx as f64;
    o[19] = dy as f64;
    o
}

pub fn student_observation(state: &MazeState, layout: &MazeLayout) -> [f64; STUDENT_OBS_DIM] {
    let mut o = [0.0; STUDENT_OBS_DIM];
    o[..2].copy_from_slice(&common_head(state, layout));
    for (k, n) in neighbors(state.pos).into_iter().enumerate() {
        if let Some(c) = layout.cell(n) {
            o[2 + 3 * k + collapse(TeacherClass::from(c)) as usize] = 1.0;
        }
    }
    let (dx, dy) = state.movement();
    o[14] = dx as f64;
    o[15] = dy as f64;
    o
}

/// Maps a teacher observation to the student observation of the same state.
pub fn collapse_observation(teacher: &[f64]) -> [f64; STUDENT_OBS_DIM] {
    let mut o = [0.0; STUDENT_OBS_DIM];
    o[..2].copy_from_slice(&teacher[..2]);
    for k in 0..4 {
        let t = &teacher[2 + 4 * k..6 + 4 * k];
        let s = &mut o[2 + 3 * k..5 + 3 * k];
        s[0] = t[0];
        s[1] = t[1] + t[2];
        s[2] = t[3];
    }
    o[14] = teacher[18];
    o[15] = teacher[19];
    o
}

/// Batch of mazes with fixed per-environment layouts.
///
/// With `auto_reset` on, an environment that finishes is reset inside
/// [`VecEnv::step`]; the returned reward/done/outcome describe the finishing
/// transition and the returned observation is the first one of the new episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorMazeBatch {
    envs: Vec<MazeEnv>,
    pub auto_reset: bool,
}

impl ColorMazeBatch {
    pub fn new(layouts: Vec<MazeLayout>, horizon: u32) -> Self {
        Self {
            envs: layouts.into_iter().map(|l| MazeEnv::new(l, horizon)).collect(),
            auto_reset: true,
        }
    }

    pub fn envs(&self) -> &[MazeEnv] {
        &self.envs
    }

    pub fn layouts(&self) -> impl Iterator<Item = &MazeLayout> {
        self.envs.iter().map(|e| &e.layout)
    }
}

impl VecEnv for ColorMazeBatch {
    fn num_envs(&self) -> usize {
        self.envs.len()
    }

    fn teacher_obs_dim(&self) -> usize {
        TEACHER_OBS_DIM
    }

    fn student_obs_dim(&self) -> usize {
        STUDENT_OBS_DIM
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(NUM_ACTIONS)
    }

    fn reset_all(&mut self) -> ObservationBatch {
        self.envs.iter_mut().for_each(MazeEnv::reset);
        self.observe()
    }

    fn observe(&self) -> ObservationBatch {
        let n = self.envs.len();
        let mut teacher = Vec::with_capacity(n * TEACHER_OBS_DIM);
        let mut student = Vec::with_capacity(n * STUDENT_OBS_DIM);
        for e in &self.envs {
            teacher.extend_from_slice(&e.teacher_observation());
            student.extend_from_slice(&e.student_observation());
        }
        ObservationBatch {
            teacher: Tensor2D::from_vec(n, TEACHER_OBS_DIM, teacher).expect("shape"),
            student: Tensor2D::from_vec(n, STUDENT_OBS_DIM, student).expect("shape"),
        }
    }

    fn step(&mut self, actions: &ActionBatch) -> Result<StepOutput> {
        let ActionBatch::Discrete(acts) = actions else {
            return Err(Error::InvalidArgument("Color Maze takes discrete actions".into()));
        };
        if acts.len() != self.envs.len() {
            return Err(Error::Shape {
                context: "ColorMazeBatch::step actions",
                expected: (self.envs.len(), 1),
                actual: (acts.len(), 1),
            });
        }
        if let Some(&a) = acts.iter().find(|&&a| a >= NUM_ACTIONS) {
            return Err(Error::InvalidArgument(format!("maze action {a} not in 0..4")));
        }
        let mut reward = Vec::with_capacity(acts.len());
        let mut done = Vec::with_capacity(acts.len());
        let mut outcome = Vec::with_capacity(acts.len());
        for (env, &a) in self.envs.iter_mut().zip(acts) {
            let t = env.step(a)?;
            reward.push(t.reward);
            done.push(t.outcome != Outcome::Running);
            outcome.push(t.outcome);
            if t.outcome != Outcome::Running && self.auto_reset {
                env.reset();
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
