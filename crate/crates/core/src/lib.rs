//! Student-informed teacher training.
//!
//! A PPO teacher acting on privileged observations is trained together with a
//! student (restricted observations) and a proxy student (privileged
//! observations, imitating the student). All three share one action decoder.
//! The teacher's reward is penalized by the teacher/proxy KL divergence and
//! its loss carries a KL term, so it learns behavior the student can copy.

pub mod baselines;
pub mod config;
pub mod distributions;
pub mod envs;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod render;
pub mod report;
pub mod rng;
pub mod run;
pub mod trainer;

pub use error::{Error, Result};
