//! Random number streams.
//!
//! Every stochastic choice in a run is drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`).
//! A run has a single root seed. Each consumer gets its own generator built as
//! `ChaCha8Rng::seed_from_u64(root)` followed by `set_stream(id)` with one of the
//! stream ids below, so consumers never share state and adding draws to one
//! stream leaves every other stream untouched.
//!
//! Maze layouts are generated from per-environment `u64` seeds drawn from the
//! [`Stream::Layouts`] / [`Stream::EvalLayouts`] streams; a layout is a pure
//! function of its seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Network initialization.
    Init = 1,
    /// Training layout seeds.
    Layouts = 2,
    /// Action sampling during roll-outs.
    Rollout = 3,
    /// Choice of the environments paired for alignment.
    Alignment = 4,
    /// Held-out evaluation layout seeds.
    EvalLayouts = 5,
    /// Baseline data collection (DAgger mixing, BC sampling).
    Baseline = 6,
    /// Environment-internal randomness (episode resets of stochastic envs).
    Env = 7,
    /// Supervised minibatch shuffling.
    Shuffle = 8,
}

pub fn stream(root_seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
