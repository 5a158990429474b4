//! Building trainers from a [`RunConfig`], checkpoints and output directories.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{train_bc, train_dagger, BudgetLedger, DaggerRound};
use crate::config::{Algorithm, EnvKind, RunConfig};
use crate::envs::{ColorMazeBatch, MazeLayout, PointGapBatch, VecEnv};
use crate::error::{Error, Result};
use crate::eval::{evaluate, layout_set, EvalSet};
use crate::metrics::{append_csv, write_csv, write_summary, MetricsRecord, RunSummary};
use crate::policy::{Actor, PolicyBundle};
use crate::rng::Stream;
use crate::trainer::{TrainMode, Trainer, TrainerState};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Training layouts: one fixed layout per environment.
pub fn training_layouts(cfg: &RunConfig) -> Result<Vec<MazeLayout>> {
    layout_set(cfg.run.seed, Stream::Layouts, cfg.env.dims(), cfg.env.num_envs)
}

pub fn build_env(cfg: &RunConfig) -> Result<Box<dyn VecEnv>> {
    Ok(match cfg.env.kind {
        EnvKind::Maze => Box::new(ColorMazeBatch::new(training_layouts(cfg)?, cfg.env.horizon)),
        EnvKind::Pointgap => Box::new(PointGapBatch::new(cfg.env.pointgap, cfg.env.num_envs, cfg.run.seed)?),
    })
}

/// Held-out evaluation set (distinct stream from the training layouts).
pub fn build_eval(cfg: &RunConfig) -> Result<EvalSet> {
    match cfg.env.kind {
        EnvKind::Maze => EvalSet::maze_heldout(cfg.run.seed, cfg.env.dims(), cfg.env.eval_layouts, cfg.env.horizon),
        EnvKind::Pointgap => EvalSet::pointgap_heldout(cfg.run.seed, cfg.env.pointgap, cfg.env.eval_layouts),
    }
}

/// Evaluation on the training layouts themselves (maze only).
pub fn training_eval(cfg: &RunConfig) -> Result<EvalSet> {
    Ok(EvalSet::Maze {
        layouts: training_layouts(cfg)?,
        horizon: cfg.env.horizon,
    })
}

pub fn build_trainer(cfg: &RunConfig, mode: TrainMode) -> Result<Trainer> {
    cfg.validate()?;
    Trainer::new(
        mode,
        cfg.sitt,
        cfg.ppo,
        &cfg.net,
        build_env(cfg)?,
        cfg.run.seed,
        Some(build_eval(cfg)?),
    )
}

/// Runs every iteration in memory and returns the finished trainer.
pub fn joint_train(cfg: &RunConfig, mode: TrainMode) -> Result<Trainer> {
    let mut t = build_trainer(cfg, mode)?;
    t.run(|_, _| Ok(()))?;
    Ok(t)
}

/// Versioned JSON checkpoint of a joint-training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: RunConfig,
    pub state: TrainerState,
    pub env: serde_json::Value,
}

impl Checkpoint {
    pub fn capture(cfg: &RunConfig, trainer: &Trainer) -> Result<Self> {
        Ok(Self {
            version: CHECKPOINT_VERSION,
            config_hash: cfg.hash()?,
            config: cfg.clone(),
            state: trainer.state.clone(),
            env: trainer.env.snapshot()?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let c: Self = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("malformed checkpoint {}: {e}", path.display())))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} not supported (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        if c.config.hash()? != c.config_hash {
            return Err(Error::Checkpoint(
                "config hash does not match the embedded config".into(),
            ));
        }
        Ok(c)
    }

    /// Rebuilds the trainer, restoring the environment to the captured state.
    pub fn into_trainer(self) -> Result<(RunConfig, Trainer)> {
        let mut env = build_env(&self.config)?;
        env.restore(&self.env)?;
        let eval = build_eval(&self.config)?;
        Ok((self.config, Trainer::from_state(self.state, env, Some(eval))))
    }
}

/// Output directory layout of one run.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        std::fs::write(root.join(CONFIG_FILE), cfg.to_toml()?)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join(METRICS_FILE)
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join(SUMMARY_FILE)
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join(CHECKPOINT_FILE)
    }
}

/// Trains to completion, appending one metrics row per iteration and
/// writing checkpoints on the configured cadence and at the end.
pub fn train_to_dir(cfg: &RunConfig, trainer: &mut Trainer, dir: &RunDir) -> Result<()> {
    let every = cfg.run.checkpoint_interval;
    trainer.run(|t, m: &MetricsRecord| {
        append_csv(&dir.metrics(), m)?;
        if every > 0 && m.iteration % every == 0 {
            Checkpoint::capture(cfg, t)?.save(&dir.checkpoint())?;
        }
        Ok(())
    })?;
    Checkpoint::capture(cfg, trainer)?.save(&dir.checkpoint())
}

pub const STUDENT_FILE: &str = "student.json";
pub const BASELINE_FILE: &str = "baseline.json";

/// Baseline bookkeeping written next to a BC or DAgger run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub algorithm: Algorithm,
    pub ledger: BudgetLedger,
    pub joint_budget: u64,
    pub rounds: Vec<DaggerRound>,
    pub samples: usize,
}

/// Evaluates teacher and student on the held-out set.
pub fn summarize(
    cfg: &RunConfig,
    teacher: &PolicyBundle,
    student: &PolicyBundle,
    ledger: BudgetLedger,
    iterations: usize,
    final_epsilon: Option<f64>,
) -> Result<RunSummary> {
    let set = build_eval(cfg)?;
    let t = evaluate(teacher, Actor::Teacher, &set, cfg.ppo.gamma)?;
    let s = evaluate(student, Actor::Student, &set, cfg.ppo.gamma)?;
    Ok(RunSummary {
        mode: cfg.run.algorithm.name().to_string(),
        seed: cfg.run.seed,
        config_hash: cfg.hash()?,
        iterations,
        env_steps: ledger.total_env_steps(),
        paired_obs: ledger.paired_obs,
        teacher_success: t.success_rate,
        student_success: s.success_rate,
        final_epsilon,
    })
}

/// Runs the configured algorithm into `cfg.run.out_dir` and writes `summary.json`.
pub fn train_run(cfg: &RunConfig) -> Result<RunSummary> {
    let dir = RunDir::create(&cfg.run.out_dir, cfg)?;
    for stale in [METRICS_FILE, STUDENT_FILE, BASELINE_FILE, SUMMARY_FILE] {
        let p = dir.root.join(stale);
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }
    match cfg.run.algorithm.train_mode() {
        Some(mode) => {
            let mut trainer = build_trainer(cfg, mode)?;
            train_to_dir(cfg, &mut trainer, &dir)?;
            finish_joint(cfg, &trainer, &dir)
        }
        None => {
            let mut tc = cfg.clone();
            tc.sitt.iterations = crate::baselines::teacher_iterations(cfg)?;
            let mut teacher = build_trainer(&tc, TrainMode::TeacherOnly)?;
            train_to_dir(&tc, &mut teacher, &dir)?;
            finish_baseline(cfg, &teacher, &dir)
        }
    }
}

/// Resumes a joint run from its checkpoint and finishes it. The metrics file
/// is rewritten from the checkpoint, dropping rows logged after it.
pub fn resume_run(root: &Path) -> Result<RunSummary> {
    let ck = Checkpoint::load(&root.join(CHECKPOINT_FILE))?;
    let (cfg, mut trainer) = ck.into_trainer()?;
    if cfg.run.algorithm.train_mode().is_none() {
        return Err(Error::Checkpoint(
            "resuming baseline runs is not supported; rerun `train`".into(),
        ));
    }
    let dir = RunDir {
        root: root.to_path_buf(),
    };
    write_csv(&dir.metrics(), &trainer.state.metrics)?;
    train_to_dir(&cfg, &mut trainer, &dir)?;
    finish_joint(&cfg, &trainer, &dir)
}

fn finish_joint(cfg: &RunConfig, trainer: &Trainer, dir: &RunDir) -> Result<RunSummary> {
    let eps = trainer.state.metrics.last().and_then(|m| m.epsilon);
    let s = summarize(
        cfg,
        trainer.bundle(),
        trainer.bundle(),
        BudgetLedger::joint(trainer),
        trainer.state.iteration,
        eps,
    )?;
    write_summary(&dir.summary(), &s)?;
    Ok(s)
}

fn finish_baseline(cfg: &RunConfig, teacher: &Trainer, dir: &RunDir) -> Result<RunSummary> {
    let result = match cfg.run.algorithm {
        Algorithm::Bc => train_bc(cfg, teacher)?,
        _ => train_dagger(cfg, teacher)?,
    };
    std::fs::write(dir.root.join(STUDENT_FILE), serde_json::to_vec(&result.student)?)?;
    let record = BaselineRecord {
        algorithm: cfg.run.algorithm,
        ledger: result.ledger,
        joint_budget: cfg.joint_budget(),
        rounds: result.rounds.clone(),
        samples: result.samples,
    };
    std::fs::write(dir.root.join(BASELINE_FILE), serde_json::to_string_pretty(&record)?)?;
    let s = summarize(
        cfg,
        teacher.bundle(),
        &result.student,
        result.ledger,
        teacher.state.iteration,
        None,
    )?;
    write_summary(&dir.summary(), &s)?;
    Ok(s)
}

/// Policies and configuration of a finished (or checkpointed) run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: RunConfig,
    pub teacher: PolicyBundle,
    /// The bundle to evaluate with [`Actor::Student`]: the joint bundle, or a baseline's fitted copy.
    pub student: PolicyBundle,
}

pub fn load_run(root: &Path) -> Result<LoadedRun> {
    let ck = Checkpoint::load(&root.join(CHECKPOINT_FILE))?;
    let student_path = root.join(STUDENT_FILE);
    let student = if student_path.exists() {
        serde_json::from_slice(&std::fs::read(&student_path)?)
            .map_err(|e| Error::Checkpoint(format!("malformed {}: {e}", student_path.display())))?
    } else {
        ck.state.bundle.clone()
    };
    let config = match std::fs::read_to_string(root.join(CONFIG_FILE)) {
        Ok(text) => RunConfig::from_toml_str(&text)?,
        Err(_) => ck.config.clone(),
    };
    Ok(LoadedRun {
        config,
        teacher: ck.state.bundle,
        student,
    })
}
