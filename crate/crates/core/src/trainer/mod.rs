//! Joint training loop: roll-out, policy update and alignment phases.
//!
//! Each iteration
//! 1. rolls the teacher out for `rollout_steps` steps in every environment,
//!    storing shaped rewards `r − λ₁ · KL(π_T ‖ π̂_S)` (the proxy is frozen)
//!    and pushing paired observations into the FIFO alignment buffer;
//! 2. updates teacher encoder, shared decoder, critic and log-std with the
//!    PPO loss plus `λ₂ · KL(π_T ‖ π̂_S)`;
//! 3. aligns the student to the teacher and the proxy to the student with the
//!    teacher and decoder frozen.
//!
//! Every phase is bracketed by parameter-hash checks: a phase that changes a
//! parameter group it does not own aborts training.

pub mod alignment;
pub mod diagnostics;

use rand::seq::index;
use serde::{Deserialize, Serialize};

pub use alignment::{alignment_phase, proxy_alignment_grad, student_alignment_grad, AlignmentBuffer, AlignmentReport};
pub use diagnostics::{estimate_epsilon, performance_bound};

use crate::envs::{ObservationBatch, Outcome, VecEnv};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalSet};
use crate::metrics::MetricsRecord;
use crate::nn::{clip_grad_norm, Adam, AdamConfig};
use crate::policy::{Actor, NetConfig, ParamGroup, PolicyBundle};
use crate::ppo::buffer::StepRecord;
use crate::ppo::{ppo_teacher_loss, LossReport, Minibatch, PpoConfig, RolloutBuffer};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Full method: KL-shaped reward, KL loss term and alignment.
    Aligned,
    /// λ₁ = λ₂ = 0 with the alignment phase kept.
    WithoutAlignment,
    /// Plain PPO on the teacher; student and proxy are never touched.
    TeacherOnly,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Aligned => "aligned",
            TrainMode::WithoutAlignment => "without_alignment",
            TrainMode::TeacherOnly => "teacher_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SittConfig {
    /// Training iterations (N).
    pub iterations: usize,
    /// Roll-out steps per environment per iteration (T).
    pub rollout_steps: usize,
    /// Alignment iterations per phase (L).
    pub alignment_iters: usize,
    /// Fraction of environments whose states are paired for alignment.
    pub alignment_fraction: f64,
    /// FIFO capacity of the alignment buffer; 0 means one roll-out's worth of pairs.
    pub alignment_capacity: usize,
    pub alignment_lr: f64,
    /// Evaluate every this many iterations (and always after the last); 0 evaluates only at the end.
    pub eval_interval: usize,
}

impl Default for SittConfig {
    fn default() -> Self {
        Self {
            iterations: 60,
            rollout_steps: 128,
            alignment_iters: 20,
            alignment_fraction: 0.5,
            alignment_capacity: 0,
            alignment_lr: 1e-3,
            eval_interval: 5,
        }
    }
}

impl SittConfig {
    /// Environments whose states are paired each roll-out.
    pub fn paired_envs(&self, n_envs: usize) -> usize {
        ((self.alignment_fraction * n_envs as f64).ceil() as usize).clamp(1, n_envs.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.rollout_steps == 0 || self.alignment_iters == 0 {
            return Err(Error::Config(
                "sitt.iterations, rollout_steps and alignment_iters must be ≥ 1".into(),
            ));
        }
        if !(self.alignment_fraction > 0.0 && self.alignment_fraction <= 1.0) {
            return Err(Error::Config("sitt.alignment_fraction must lie in (0, 1]".into()));
        }
        if self.alignment_lr <= 0.0 {
            return Err(Error::Config("sitt.alignment_lr must be positive".into()));
        }
        Ok(())
    }
}

/// Summary of one finished episode of the training roll-outs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub task_return: f64,
    pub shaped_return: f64,
    pub discounted_task: f64,
    pub discounted_shaped: f64,
    pub discounted_kl: f64,
    pub length: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct EpisodeAcc {
    task: f64,
    shaped: f64,
    disc_task: f64,
    disc_shaped: f64,
    disc_kl: f64,
    discount: f64,
    length: usize,
}

impl Default for EpisodeAcc {
    fn default() -> Self {
        Self {
            task: 0.0,
            shaped: 0.0,
            disc_task: 0.0,
            disc_shaped: 0.0,
            disc_kl: 0.0,
            discount: 1.0,
            length: 0,
        }
    }
}

/// Running per-environment episode sums, carried across roll-outs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTracker {
    acc: Vec<EpisodeAcc>,
    gamma: f64,
}

impl EpisodeTracker {
    pub fn new(n_envs: usize, gamma: f64) -> Self {
        Self {
            acc: vec![EpisodeAcc::default(); n_envs],
            gamma,
        }
    }

    pub fn record(&mut self, env: usize, task: f64, shaped: f64, kl: f64, outcome: Outcome) -> Option<EpisodeSummary> {
        let a = &mut self.acc[env];
        a.task += task;
        a.shaped += shaped;
        a.disc_task += a.discount * task;
        a.disc_shaped += a.discount * shaped;
        a.disc_kl += a.discount * kl;
        a.discount *= self.gamma;
        a.length += 1;
        if outcome == Outcome::Running {
            return None;
        }
        let s = EpisodeSummary {
            task_return: a.task,
            shaped_return: a.shaped,
            discounted_task: a.disc_task,
            discounted_shaped: a.disc_shaped,
            discounted_kl: a.disc_kl,
            length: a.length,
            outcome,
        };
        *a = EpisodeAcc::default();
        Some(s)
    }
}

/// Everything needed to resume training bit-exactly (besides the environment snapshot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub mode: TrainMode,
    pub sitt: SittConfig,
    pub ppo: PpoConfig,
    pub bundle: PolicyBundle,
    pub opt_teacher: Adam,
    pub opt_student: Adam,
    pub opt_proxy: Adam,
    pub align: AlignmentBuffer,
    pub rng_rollout: rng::Rng,
    pub rng_shuffle: rng::Rng,
    pub rng_alignment: rng::Rng,
    pub tracker: EpisodeTracker,
    pub iteration: usize,
    pub env_steps: u64,
    pub paired_obs: u64,
    pub r_max: f64,
    pub isolation_checks: u64,
    pub metrics: Vec<MetricsRecord>,
}

#[derive(Debug, Clone)]
pub struct RolloutOutput {
    pub buffer: RolloutBuffer,
    pub episodes: Vec<EpisodeSummary>,
    pub paired_rows: usize,
}

/// Outcome of one full iteration.
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub metrics: MetricsRecord,
    pub rollout: RolloutOutput,
    pub update: LossReport,
    pub alignment: Option<AlignmentReport>,
}

pub struct Trainer {
    pub state: TrainerState,
    pub env: Box<dyn VecEnv>,
    pub eval: Option<EvalSet>,
    obs: ObservationBatch,
}

impl Trainer {
    /// Builds a fresh trainer; networks are initialized from the root seed's init stream.
    pub fn new(
        mode: TrainMode,
        sitt: SittConfig,
        mut ppo: PpoConfig,
        net: &NetConfig,
        mut env: Box<dyn VecEnv>,
        root_seed: u64,
        eval: Option<EvalSet>,
    ) -> Result<Self> {
        sitt.validate()?;
        if mode != TrainMode::Aligned {
            ppo.lambda1 = 0.0;
            ppo.lambda2 = 0.0;
        }
        ppo.validate()?;
        let n = env.num_envs();
        if n == 0 {
            return Err(Error::Config("at least one environment is required".into()));
        }
        let bundle = PolicyBundle::new(
            env.teacher_obs_dim(),
            env.student_obs_dim(),
            env.action_space(),
            net,
            &mut rng::stream(root_seed, Stream::Init),
        )?;
        let capacity = if sitt.alignment_capacity == 0 {
            sitt.rollout_steps * n
        } else {
            sitt.alignment_capacity
        };
        let align = AlignmentBuffer::new(capacity, env.teacher_obs_dim(), env.student_obs_dim())?;
        let obs = env.reset_all();
        let state = TrainerState {
            mode,
            sitt,
            ppo,
            bundle,
            opt_teacher: Adam::new(AdamConfig::with_lr(ppo.lr)),
            opt_student: Adam::new(AdamConfig::with_lr(sitt.alignment_lr)),
            opt_proxy: Adam::new(AdamConfig::with_lr(sitt.alignment_lr)),
            align,
            rng_rollout: rng::stream(root_seed, Stream::Rollout),
            rng_shuffle: rng::stream(root_seed, Stream::Shuffle),
            rng_alignment: rng::stream(root_seed, Stream::Alignment),
            tracker: EpisodeTracker::new(n, ppo.gamma),
            iteration: 0,
            env_steps: 0,
            paired_obs: 0,
            r_max: 0.0,
            isolation_checks: 0,
            metrics: Vec::new(),
        };
        Ok(Self { state, env, eval, obs })
    }

    /// Rebuilds a trainer from saved state plus a restored environment.
    pub fn from_state(state: TrainerState, env: Box<dyn VecEnv>, eval: Option<EvalSet>) -> Self {
        let obs = env.observe();
        Self { state, env, eval, obs }
    }

    pub fn bundle(&self) -> &PolicyBundle {
        &self.state.bundle
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.state.sitt.iterations
    }

    /// Roll-out phase: samples teacher actions and stores shaped transitions.
    /// No parameters change.
    pub fn rollout_phase(&mut self) -> Result<RolloutOutput> {
        let st = &mut self.state;
        let n = self.env.num_envs();
        let with_proxy = st.mode != TrainMode::TeacherOnly;
        let mut steps = Vec::with_capacity(st.sitt.rollout_steps);
        let mut episodes = Vec::new();
        for _ in 0..st.sitt.rollout_steps {
            let obs = &self.obs;
            let dist = st.bundle.dist(Actor::Teacher, &obs.teacher)?;
            let values = st.bundle.values(&obs.teacher)?;
            let actions = dist.sample(&mut st.rng_rollout);
            let log_probs = dist.log_prob(&actions)?;
            let kl = if with_proxy {
                dist.kl(&st.bundle.dist(Actor::Proxy, &obs.teacher)?)?
            } else {
                vec![0.0; n]
            };
            if kl.iter().any(|k| !k.is_finite()) {
                return Err(Error::Numerical("non-finite teacher/proxy KL during roll-out".into()));
            }
            let out = self.env.step(&actions)?;
            for e in 0..n {
                let r = out.reward[e];
                st.r_max = st.r_max.max(r.abs());
                let shaped = crate::ppo::shape_reward(r, kl[e], st.ppo.lambda1);
                if let Some(s) = st.tracker.record(e, r, shaped, kl[e], out.outcome[e]) {
                    episodes.push(s);
                }
            }
            let prev = std::mem::replace(&mut self.obs, out.obs);
            steps.push(StepRecord {
                teacher_obs: prev.teacher,
                student_obs: prev.student,
                actions,
                log_probs,
                values,
                task_rewards: out.reward,
                kl,
                dones: out.done,
                outcomes: out.outcome,
            });
        }
        let last_values = st.bundle.values(&self.obs.teacher)?;
        let buffer = RolloutBuffer::from_steps(steps, last_values, st.ppo.lambda1)?;
        st.env_steps += buffer.len() as u64;
        let mut paired_rows = 0;
        if st.mode != TrainMode::TeacherOnly {
            let rows = self.alignment_rows(buffer.n_steps, n);
            paired_rows = rows.len();
            let st = &mut self.state;
            st.align.push_rows(&buffer.teacher_obs, &buffer.student_obs, &rows)?;
            st.paired_obs += rows.len() as u64;
        }
        Ok(RolloutOutput {
            buffer,
            episodes,
            paired_rows,
        })
    }

    fn alignment_rows(&mut self, n_steps: usize, n_envs: usize) -> Vec<usize> {
        let st = &mut self.state;
        let k = st.sitt.paired_envs(n_envs);
        let mut envs: Vec<usize> = if k == n_envs {
            (0..n_envs).collect()
        } else {
            index::sample(&mut st.rng_alignment, n_envs, k).into_vec()
        };
        envs.sort_unstable();
        (0..n_steps)
            .flat_map(|t| envs.iter().map(move |&e| t * n_envs + e))
            .collect()
    }

    /// Policy-update phase over a roll-out buffer with advantages computed.
    /// Returns the loss report averaged over all gradient steps.
    pub fn policy_update_phase(&mut self, buffer: &RolloutBuffer) -> Result<LossReport> {
        let st = &mut self.state;
        let len = buffer.len();
        let mb = len.div_ceil(st.ppo.minibatches);
        let mut acc = LossReport::default();
        let mut count = 0.0;
        for _ in 0..st.ppo.epochs {
            let mut idx: Vec<usize> = (0..len).collect();
            if st.ppo.minibatches > 1 {
                rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut st.rng_shuffle);
            }
            for chunk in idx.chunks(mb) {
                let batch = Minibatch {
                    teacher_obs: buffer.teacher_obs.select_rows(chunk),
                    actions: buffer.actions.select(chunk),
                    old_log_probs: chunk.iter().map(|&i| buffer.log_probs[i]).collect(),
                    advantages: chunk.iter().map(|&i| buffer.advantages[i]).collect(),
                    returns: chunk.iter().map(|&i| buffer.returns[i]).collect(),
                };
                for p in st.bundle.teacher_side_params_mut() {
                    p.zero_grad();
                }
                let rep = ppo_teacher_loss(&mut st.bundle, &batch, &st.ppo)?;
                if let Some(m) = st.ppo.max_grad_norm {
                    clip_grad_norm(&mut st.bundle.teacher_side_params_mut(), m);
                }
                st.opt_teacher.step(&mut st.bundle.teacher_side_params_mut())?;
                acc.total += rep.total;
                acc.policy += rep.policy;
                acc.value += rep.value;
                acc.entropy += rep.entropy;
                acc.kl += rep.kl;
                acc.clip_fraction += rep.clip_fraction;
                count += 1.0;
            }
        }
        for v in [
            &mut acc.total,
            &mut acc.policy,
            &mut acc.value,
            &mut acc.entropy,
            &mut acc.kl,
            &mut acc.clip_fraction,
        ] {
            *v /= count;
        }
        Ok(acc)
    }

    /// Alignment phase over the current alignment buffer.
    pub fn alignment_phase(&mut self) -> Result<Option<AlignmentReport>> {
        let st = &mut self.state;
        alignment_phase(
            &mut st.bundle,
            &st.align,
            st.sitt.alignment_iters,
            &mut st.opt_student,
            &mut st.opt_proxy,
        )
    }

    /// Runs one full iteration with phase-isolation checks.
    pub fn iterate(&mut self) -> Result<IterationOutput> {
        let it = self.state.iteration + 1;
        self.iterate_inner(it).map_err(|e| Error::Iteration {
            iteration: it,
            source: Box::new(e),
        })
    }

    fn iterate_inner(&mut self, it: usize) -> Result<IterationOutput> {
        use ParamGroup::*;
        let h0 = self.state.bundle.hashes();
        let mut rollout = self.rollout_phase()?;
        let h1 = self.state.bundle.hashes();
        self.check_isolation("roll-out", &h0, &h1, &[])?;

        rollout.buffer.compute_advantages(&self.state.ppo)?;
        let update = self.policy_update_phase(&rollout.buffer)?;
        let h2 = self.state.bundle.hashes();
        self.check_isolation("policy update", &h1, &h2, &[Teacher, Decoder, Critic, LogStd])?;

        let alignment = if self.state.mode == TrainMode::TeacherOnly {
            None
        } else {
            let a = self.alignment_phase()?;
            let h3 = self.state.bundle.hashes();
            self.check_isolation("alignment", &h2, &h3, &[Student, Proxy])?;
            a
        };
        if !self.state.bundle.is_finite() {
            return Err(Error::Numerical("non-finite parameters after update".into()));
        }
        self.state.iteration = it;
        let metrics = self.metrics_for(it, &rollout, &update, alignment.as_ref())?;
        self.state.metrics.push(metrics.clone());
        log::info!(
            "iter {it} steps {} return {:?} kl {:.4} eps {:?} eval T/S {:?}/{:?}",
            metrics.env_steps,
            metrics.teacher_return,
            metrics.mean_kl,
            metrics.epsilon,
            metrics.eval_teacher_success,
            metrics.eval_student_success
        );
        Ok(IterationOutput {
            metrics,
            rollout,
            update,
            alignment,
        })
    }

    fn check_isolation(
        &mut self,
        phase: &'static str,
        before: &crate::policy::GroupHashes,
        after: &crate::policy::GroupHashes,
        allowed: &[ParamGroup],
    ) -> Result<()> {
        self.state.isolation_checks += 1;
        let bad: Vec<ParamGroup> = before
            .changed(after)
            .into_iter()
            .filter(|g| !allowed.contains(g))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Isolation {
                phase,
                groups: format!("{bad:?}"),
            })
        }
    }

    fn metrics_for(
        &self,
        it: usize,
        rollout: &RolloutOutput,
        update: &LossReport,
        alignment: Option<&AlignmentReport>,
    ) -> Result<MetricsRecord> {
        let st = &self.state;
        let buf = &rollout.buffer;
        let eps = &rollout.episodes;
        let mean = |f: &dyn Fn(&EpisodeSummary) -> f64| {
            (!eps.is_empty()).then(|| eps.iter().map(f).sum::<f64>() / eps.len() as f64)
        };
        let epsilon = estimate_epsilon(&st.bundle, &buf.teacher_obs, &buf.student_obs)?;
        let bound = if st.ppo.gamma < 1.0 {
            Some(performance_bound(st.r_max, st.ppo.gamma, epsilon)?)
        } else {
            None
        };
        let due = it == st.sitt.iterations || (st.sitt.eval_interval > 0 && it % st.sitt.eval_interval == 0);
        let (mut et, mut es, mut gap) = (None, None, None);
        if let (Some(set), true) = (&self.eval, due) {
            let t = evaluate(&st.bundle, Actor::Teacher, set, st.ppo.gamma)?;
            let s = evaluate(&st.bundle, Actor::Student, set, st.ppo.gamma)?;
            et = Some(t.success_rate);
            es = Some(s.success_rate);
            gap = Some(t.mean_discounted_return - s.mean_discounted_return);
        }
        let n = buf.len() as f64;
        Ok(MetricsRecord {
            iteration: it,
            env_steps: st.env_steps,
            paired_obs: st.paired_obs,
            episodes: eps.len(),
            teacher_return: mean(&|e| e.task_return),
            shaped_return: mean(&|e| e.shaped_return),
            train_success: mean(&|e| if e.outcome == Outcome::Success { 1.0 } else { 0.0 }),
            mean_kl: buf.kl.iter().sum::<f64>() / n,
            mean_kl_penalty: buf.kl_penalty.iter().sum::<f64>() / n,
            policy_loss: update.policy,
            value_loss: update.value,
            entropy: update.entropy,
            student_loss: alignment.map(|a| a.student_loss_last),
            proxy_loss: alignment.map(|a| a.proxy_loss_last),
            epsilon: Some(epsilon),
            r_max: st.r_max,
            bound,
            eval_teacher_success: et,
            eval_student_success: es,
            return_gap: gap,
        })
    }

    /// Runs the remaining iterations, handing each record to `on_iteration`.
    pub fn run(&mut self, mut on_iteration: impl FnMut(&Trainer, &MetricsRecord) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let out = self.iterate()?;
            on_iteration(self, &out.metrics)?;
        }
        Ok(())
    }
}
