//! Imitation baselines: Behavior Cloning and DAgger.
//!
//! Both start from a plain-PPO teacher trained for the joint method's budget
//! minus the collection budget spent gathering imitation data, so every method
//! consumes the same number of environment steps. The student is a copy of
//! the teacher's bundle whose student encoder and private decoder copy are
//! fitted to `KL(π_T ‖ π_S)` (soft-label cross-entropy up to a constant); the
//! teacher bundle itself is never modified.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::envs::{ActionBatch, VecEnv};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Tensor2D};
use crate::policy::{ActionDist, Actor, PolicyBundle};
use crate::rng::{self, Stream};
use crate::run;
use crate::trainer::{TrainMode, Trainer};

/// Per-round teacher-action probability `βᵢ = β₀ⁱ` for rounds `i = 1, 2, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaggerSchedule {
    pub beta0: f64,
}

impl DaggerSchedule {
    pub fn new(beta0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta0) {
            return Err(Error::InvalidArgument(format!("β₀ = {beta0} outside [0, 1]")));
        }
        Ok(Self { beta0 })
    }

    pub fn beta(&self, round: usize) -> f64 {
        self.beta0.powi(round as i32)
    }
}

/// Environment interactions and paired observations a method consumed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub teacher_env_steps: u64,
    pub collection_env_steps: u64,
    pub paired_obs: u64,
}

impl BudgetLedger {
    pub fn total_env_steps(&self) -> u64 {
        self.teacher_env_steps + self.collection_env_steps
    }

    /// Ledger of a joint-training run (every step is a teacher step).
    pub fn joint(trainer: &Trainer) -> Self {
        Self {
            teacher_env_steps: trainer.state.env_steps,
            collection_env_steps: 0,
            paired_obs: trainer.state.paired_obs,
        }
    }
}

/// One DAgger collection round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaggerRound {
    pub round: usize,
    pub beta: f64,
    pub steps: u64,
    pub teacher_actions: u64,
    pub loss_first: f64,
    pub loss_last: f64,
}

/// Labelled imitation data: student observations with teacher decoder outputs.
#[derive(Debug, Clone, Default)]
pub struct ImitationData {
    student_obs: Vec<Tensor2D>,
    targets: Vec<Tensor2D>,
    rows: usize,
}

impl ImitationData {
    pub fn push(&mut self, student_obs: Tensor2D, targets: Tensor2D) {
        self.rows += student_obs.rows();
        self.student_obs.push(student_obs);
        self.targets.push(targets);
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn tensors(&self) -> Result<(Tensor2D, Tensor2D)> {
        Ok((
            Tensor2D::vstack(&self.student_obs.iter().collect::<Vec<_>>())?,
            Tensor2D::vstack(&self.targets.iter().collect::<Vec<_>>())?,
        ))
    }
}

/// Result of a baseline run.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    /// Teacher bundle with the fitted student encoder and decoder copy; evaluate with [`Actor::Student`].
    pub student: PolicyBundle,
    pub ledger: BudgetLedger,
    pub rounds: Vec<DaggerRound>,
    pub samples: usize,
    /// Every labelled state in collection order.
    pub data: ImitationData,
}

/// Teacher iterations that leave the collection budget of the joint budget.
pub fn teacher_iterations(cfg: &RunConfig) -> Result<usize> {
    let per_iter = (cfg.sitt.rollout_steps * cfg.env.num_envs) as u64;
    let remaining = cfg
        .joint_budget()
        .checked_sub(cfg.collect_budget())
        .ok_or_else(|| Error::Config("baseline.collect_steps exceeds the joint budget".into()))?;
    let iters = (remaining / per_iter) as usize;
    if iters == 0 {
        return Err(Error::Config("baseline leaves no budget for teacher training".into()));
    }
    Ok(iters)
}

/// Trains the plain-PPO teacher used by both imitation baselines.
pub fn train_baseline_teacher(cfg: &RunConfig) -> Result<Trainer> {
    let mut c = cfg.clone();
    c.sitt.iterations = teacher_iterations(cfg)?;
    run::joint_train(&c, TrainMode::TeacherOnly)
}

/// Collection steps per environment so that at most `collect_steps` are used, and the
/// steps actually charged.
fn collection_shape(cfg: &RunConfig, rounds: usize) -> Result<(usize, u64)> {
    let e = cfg.env.num_envs as u64;
    let per_env = cfg.collect_budget() / (e * rounds as u64);
    if per_env == 0 {
        return Err(Error::Config(
            "baseline.collect_steps too small for the environment count".into(),
        ));
    }
    Ok((per_env as usize, per_env * e * rounds as u64))
}

fn collection_env(cfg: &RunConfig, teacher: &Trainer) -> Result<Box<dyn VecEnv>> {
    let mut env = run::build_env(cfg)?;
    env.restore(&teacher.env.snapshot()?)?;
    Ok(env)
}

/// Behavior Cloning: roll out the frozen teacher for the collection budget,
/// then fit the student on the labelled states.
pub fn train_bc(cfg: &RunConfig, teacher: &Trainer) -> Result<BaselineResult> {
    let fit_steps = cfg.baseline.refit_steps * cfg.baseline.dagger_iterations;
    let mut out = train_dagger_like(cfg, teacher, 1, |_| 1.0, fit_steps)?;
    out.rounds.clear();
    Ok(out)
}

/// DAgger: per round `i`, each environment executes the teacher's action with
/// probability `βᵢ` and the student's otherwise; every visited state is labelled
/// by the teacher, aggregated, and the student is refitted on the aggregate.
pub fn train_dagger(cfg: &RunConfig, teacher: &Trainer) -> Result<BaselineResult> {
    let schedule = DaggerSchedule::new(cfg.baseline.dagger_beta0)?;
    train_dagger_like(
        cfg,
        teacher,
        cfg.baseline.dagger_iterations,
        |i| schedule.beta(i),
        cfg.baseline.refit_steps,
    )
}

fn train_dagger_like(
    cfg: &RunConfig,
    teacher: &Trainer,
    rounds: usize,
    beta: impl Fn(usize) -> f64,
    fit_steps: usize,
) -> Result<BaselineResult> {
    let tb = teacher.bundle();
    let mut student = tb.clone();
    let mut env = collection_env(cfg, teacher)?;
    let (per_env, charged) = collection_shape(cfg, rounds)?;
    let batch = if cfg.baseline.batch_size == 0 {
        cfg.sitt.rollout_steps * cfg.env.num_envs
    } else {
        cfg.baseline.batch_size
    };
    let mut rng_mix = rng::stream(cfg.run.seed, Stream::Baseline);
    let mut rng_batch = teacher.state.rng_shuffle.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.baseline.lr));
    let mut data = ImitationData::default();
    let mut log = Vec::with_capacity(rounds);
    let mut obs = env.observe();
    for i in 1..=rounds {
        let b = beta(i);
        let mut teacher_actions = 0u64;
        for _ in 0..per_env {
            let t_out = tb.decode(Actor::Teacher, &obs.teacher)?;
            let t_dist = tb.distribution(t_out.clone())?;
            let t_act = t_dist.sample(&mut rng_mix);
            let actions = if b >= 1.0 {
                teacher_actions += t_act.len() as u64;
                t_act
            } else {
                let s_act = student.dist(Actor::Student, &obs.student)?.sample(&mut rng_mix);
                let pick: Vec<bool> = (0..t_act.len()).map(|_| rng_mix.random::<f64>() < b).collect();
                teacher_actions += pick.iter().filter(|&&p| p).count() as u64;
                mix(&t_act, &s_act, &pick)?
            };
            data.push(obs.student.clone(), t_out);
            obs = env.step(&actions)?.obs;
        }
        let (first, last) = fit_student(&mut student, &data, fit_steps, batch, &mut opt, &mut rng_batch)?;
        log.push(DaggerRound {
            round: i,
            beta: b,
            steps: (per_env * cfg.env.num_envs) as u64,
            teacher_actions,
            loss_first: first,
            loss_last: last,
        });
    }
    Ok(BaselineResult {
        student,
        ledger: BudgetLedger {
            teacher_env_steps: teacher.state.env_steps,
            collection_env_steps: charged,
            paired_obs: charged,
        },
        rounds: log,
        samples: data.len(),
        data,
    })
}

fn mix(teacher: &ActionBatch, student: &ActionBatch, pick_teacher: &[bool]) -> Result<ActionBatch> {
    match (teacher, student) {
        (ActionBatch::Discrete(t), ActionBatch::Discrete(s)) => Ok(ActionBatch::Discrete(
            pick_teacher
                .iter()
                .enumerate()
                .map(|(i, &p)| if p { t[i] } else { s[i] })
                .collect(),
        )),
        (ActionBatch::Continuous(t), ActionBatch::Continuous(s)) => {
            let mut out = s.clone();
            for (i, &p) in pick_teacher.iter().enumerate() {
                if p {
                    out.row_mut(i).copy_from_slice(t.row(i));
                }
            }
            Ok(ActionBatch::Continuous(out))
        }
        _ => Err(Error::InvalidArgument("action kinds differ".into())),
    }
}

/// Mean `KL(π_T ‖ π_S)` of the student on labelled data, without gradients.
pub fn imitation_loss(student: &PolicyBundle, student_obs: &Tensor2D, targets: &Tensor2D) -> Result<f64> {
    let t = student.distribution(targets.clone())?;
    let s = student.dist(Actor::Student, student_obs)?;
    let kl = t.kl(&s)?;
    Ok(kl.iter().sum::<f64>() / kl.len().max(1) as f64)
}

/// One gradient step of `mean KL(π_T ‖ π_S)` on a minibatch; updates the
/// student encoder and the bundle's decoder (the student's private copy).
pub fn imitation_step(
    student: &mut PolicyBundle,
    student_obs: &Tensor2D,
    targets: &Tensor2D,
    opt: &mut Adam,
) -> Result<f64> {
    let n = student_obs.rows();
    let enc = student.student.forward_train(student_obs)?;
    let dec = student.decoder.forward_train(enc.output().expect("forward"))?;
    let s_dist = student.distribution(dec.output().expect("forward").detached())?;
    let t_dist = student.distribution(targets.clone())?;
    let up = vec![1.0 / n as f64; n];
    let (kl, g) = match (&t_dist, &s_dist) {
        (ActionDist::Categorical(p), ActionDist::Categorical(q)) => (p.kl(q)?, p.kl_grads(q, &up)?.1),
        (ActionDist::Gaussian(t), ActionDist::Gaussian(s)) => {
            let ls = t.log_std().row(0);
            let kl = crate::distributions::gaussian_kl_shared_cov(t.mean(), s.mean(), ls)?;
            (
                kl,
                crate::distributions::gaussian_kl_shared_cov_grads(t.mean(), s.mean(), ls, &up)?.1,
            )
        }
        _ => return Err(Error::InvalidArgument("KL between different families".into())),
    };
    student.student.zero_grad();
    student.decoder.zero_grad();
    let feat_grad = student.decoder.backward(&dec, &g)?;
    student.student.backward(&enc, &feat_grad)?;
    let mut params = student.student.params_mut();
    params.extend(student.decoder.params_mut());
    opt.step(&mut params)?;
    let loss = kl.iter().sum::<f64>() / n as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical("non-finite imitation loss".into()));
    }
    Ok(loss)
}

/// `steps` minibatch steps on uniformly drawn rows; returns the first and last minibatch loss.
pub fn fit_student(
    student: &mut PolicyBundle,
    data: &ImitationData,
    steps: usize,
    batch: usize,
    opt: &mut Adam,
    rng: &mut rng::Rng,
) -> Result<(f64, f64)> {
    let (obs, targets) = data.tensors()?;
    let n = obs.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("no imitation data".into()));
    }
    let (mut first, mut last) = (f64::NAN, f64::NAN);
    for s in 0..steps {
        let l = if batch >= n {
            imitation_step(student, &obs, &targets, opt)?
        } else {
            let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
            imitation_step(student, &obs.select_rows(&idx), &targets.select_rows(&idx), opt)?
        };
        if s == 0 {
            first = l;
        }
        last = l;
    }
    Ok((first, last))
}
