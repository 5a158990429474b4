//! Run configuration.
//!
//! A run is described by a TOML document with the sections `[run]`, `[env]`,
//! `[env.pointgap]`, `[net]`, `[ppo]`, `[sitt]` and `[baseline]`. Every key has
//! a default and unknown keys are rejected. Values are resolved in this order,
//! later sources winning:
//!
//! 1. a named preset (`desk`, `paper` or `pointgap`);
//! 2. the config file;
//! 3. environment variables `SITT_<SECTION>__<KEY>` (e.g. `SITT_PPO__LR=1e-3`);
//! 4. command-line `--set section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{MazeDims, PointGapConfig};
use crate::error::{Error, Result};
use crate::policy::NetConfig;
use crate::ppo::PpoConfig;
use crate::trainer::{SittConfig, TrainMode};

/// Prefix of environment-variable overrides.
pub const ENV_PREFIX: &str = "SITT_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Aligned,
    WithoutAlignment,
    TeacherOnly,
    Bc,
    Dagger,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Aligned,
        Algorithm::WithoutAlignment,
        Algorithm::TeacherOnly,
        Algorithm::Bc,
        Algorithm::Dagger,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Aligned => "aligned",
            Algorithm::WithoutAlignment => "without_alignment",
            Algorithm::TeacherOnly => "teacher_only",
            Algorithm::Bc => "bc",
            Algorithm::Dagger => "dagger",
        }
    }

    /// Joint-training mode, or `None` for the imitation baselines.
    pub fn train_mode(self) -> Option<TrainMode> {
        match self {
            Algorithm::Aligned => Some(TrainMode::Aligned),
            Algorithm::WithoutAlignment => Some(TrainMode::WithoutAlignment),
            Algorithm::TeacherOnly => Some(TrainMode::TeacherOnly),
            Algorithm::Bc | Algorithm::Dagger => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub out_dir: PathBuf,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_interval: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            algorithm: Algorithm::Aligned,
            out_dir: PathBuf::from("runs/default"),
            checkpoint_interval: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Maze,
    Pointgap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub num_envs: usize,
    pub grid_size: usize,
    pub region_size: usize,
    pub horizon: u32,
    /// Held-out evaluation layouts (or PointGap start states).
    pub eval_layouts: usize,
    pub pointgap: PointGapConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        let d = MazeDims::scaled();
        Self {
            kind: EnvKind::Maze,
            num_envs: 64,
            grid_size: d.grid_size,
            region_size: d.region_size,
            horizon: crate::envs::color_maze::DEFAULT_HORIZON,
            eval_layouts: 15,
            pointgap: PointGapConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn dims(&self) -> MazeDims {
        MazeDims {
            grid_size: self.grid_size,
            region_size: self.region_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Environment steps spent collecting imitation data (K); the teacher gets the rest of the budget.
    /// 0 matches the paired observations of the joint method.
    pub collect_steps: u64,
    /// DAgger collection rounds; `collect_steps` is split evenly across them.
    pub dagger_iterations: usize,
    /// Initial teacher-action probability; round `i` uses `β₀ⁱ`.
    pub dagger_beta0: f64,
    /// Gradient steps per student refit.
    pub refit_steps: usize,
    /// Refit minibatch size (0: one roll-out's worth of samples).
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            collect_steps: 0,
            dagger_iterations: 10,
            dagger_beta0: 0.98,
            refit_steps: 20,
            batch_size: 0,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvConfig,
    pub net: NetConfig,
    pub ppo: PpoConfig,
    pub sitt: SittConfig,
    pub baseline: BaselineConfig,
}

impl RunConfig {
    pub const PRESETS: [&'static str; 3] = ["desk", "paper", "pointgap"];

    /// Named starting points: `desk` (scaled maze), `paper` (full maze recipe) and `pointgap`.
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Self::default();
        match name {
            "desk" => {}
            "paper" => {
                let d = MazeDims::default();
                c.env.num_envs = 1000;
                c.env.grid_size = d.grid_size;
                c.env.region_size = d.region_size;
                c.sitt.iterations = 400;
                c.sitt.rollout_steps = 250;
                c.sitt.alignment_fraction = 1.0;
                c.ppo.epochs = 10;
                c.ppo.minibatches = 1;
                c.baseline.collect_steps = 1_000_000;
            }
            "pointgap" => {
                c.env.kind = EnvKind::Pointgap;
                c.env.num_envs = 64;
                c.env.eval_layouts = 32;
                c.sitt.rollout_steps = 40;
                c.sitt.iterations = 150;
                c.sitt.alignment_fraction = 0.125;
                c.ppo.epochs = 1;
                c.ppo.minibatches = 1;
                c.sitt.alignment_capacity = 100_000;
                c.ppo.ent_coef = 0.0;
                c.ppo.lambda1 = 0.5;
                c.ppo.lambda2 = 0.01;
                c.net.init_log_std = -0.5;
                c.baseline.collect_steps = 10_240;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (expected one of {:?})",
                    Self::PRESETS
                )))
            }
        }
        Ok(c)
    }

    /// Parses a complete or partial document on top of the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Resolves preset, optional file, environment overrides and `--set` overrides.
    pub fn resolve(
        preset: &str,
        file: Option<&Path>,
        env_vars: impl IntoIterator<Item = (String, String)>,
        sets: &[String],
    ) -> Result<Self> {
        let mut table = to_table(&Self::preset(preset)?)?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<Self>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let doc: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            merge(&mut table, doc);
        }
        let mut env: Vec<(String, String)> = env_vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != "SITT_LOG")
            .collect();
        env.sort();
        for (k, v) in env {
            let path: Vec<String> = k[ENV_PREFIX.len()..]
                .split("__")
                .map(|s| s.to_ascii_lowercase())
                .collect();
            set_path(&mut table, &path, &v).map_err(|e| Error::Config(format!("environment variable {k}: {e}")))?;
        }
        for s in sets {
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{s}` is not of the form section.key=value")))?;
            let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
            set_path(&mut table, &path, value.trim()).map_err(|e| Error::Config(format!("override `{s}`: {e}")))?;
        }
        let c: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.sitt.validate()?;
        if self.env.num_envs == 0 {
            return Err(Error::Config("env.num_envs must be ≥ 1".into()));
        }
        if self.env.kind == EnvKind::Maze {
            self.env.dims().validate()?;
            if self.env.horizon == 0 {
                return Err(Error::Config("env.horizon must be ≥ 1".into()));
            }
        }
        if self.net.encoder_hidden.is_empty() || self.net.feature_dim == 0 {
            return Err(Error::Config(
                "net.encoder_hidden and net.feature_dim must be non-empty".into(),
            ));
        }
        let b = &self.baseline;
        if !(0.0..=1.0).contains(&b.dagger_beta0) {
            return Err(Error::Config("baseline.dagger_beta0 must lie in [0, 1]".into()));
        }
        if b.dagger_iterations == 0 || b.refit_steps == 0 || b.lr <= 0.0 {
            return Err(Error::Config(
                "baseline.dagger_iterations and refit_steps must be ≥ 1 and lr positive".into(),
            ));
        }
        Ok(())
    }

    /// Canonical TOML rendering (all keys, fixed order).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Environment steps the joint method consumes: `N · T · E`.
    pub fn joint_budget(&self) -> u64 {
        (self.sitt.iterations * self.sitt.rollout_steps * self.env.num_envs) as u64
    }

    /// Paired observations the joint method renders: `N · T · ⌈f · E⌉`.
    pub fn joint_paired_obs(&self) -> u64 {
        (self.sitt.iterations * self.sitt.rollout_steps * self.sitt.paired_envs(self.env.num_envs)) as u64
    }

    /// Imitation-data budget of the baselines (`baseline.collect_steps`, or the joint paired observations when 0).
    pub fn collect_budget(&self) -> u64 {
        match self.baseline.collect_steps {
            0 => self.joint_paired_obs(),
            k => k,
        }
    }
}

fn to_table(c: &RunConfig) -> Result<toml::Table> {
    toml::Table::try_from(c).map_err(|e| Error::Config(e.to_string()))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &[String], raw: &str) -> std::result::Result<(), String> {
    let (last, parents) = path.split_last().ok_or("empty key")?;
    let mut t = table;
    for p in parents {
        t = match t.get_mut(p) {
            Some(toml::Value::Table(inner)) => inner,
            _ => return Err(format!("unknown section `{p}`")),
        };
    }
    let slot = t.get_mut(last).ok_or_else(|| format!("unknown key `{last}`"))?;
    let mut v = parse_value(raw);
    if let (toml::Value::Float(_), toml::Value::Integer(i)) = (&*slot, &v) {
        v = toml::Value::Float(*i as f64);
    }
    *slot = v;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
        assert_eq!(RunConfig::from_toml_str("").unwrap(), c);
    }

    #[test]
    fn unknown_key_reports_location() {
        let e = RunConfig::from_toml_str("[ppo]\ngamma = 0.9\nlearning_rate = 1.0\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("learning_rate"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn override_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[ppo]\nlr = 0.01\nclip = 0.3\n[run]\nseed = 4\n").unwrap();
        let env = vec![
            ("SITT_PPO__CLIP".to_string(), "0.1".to_string()),
            ("HOME".to_string(), "/x".to_string()),
        ];
        let c = RunConfig::resolve("desk", Some(&p), env, &["run.seed=9".into(), "ppo.lr=1".into()]).unwrap();
        assert_eq!(c.run.seed, 9);
        assert_eq!(c.ppo.lr, 1.0);
        assert_eq!(c.ppo.clip, 0.1);
        assert_eq!(c.env.num_envs, 64);
    }

    #[test]
    fn bad_overrides_rejected() {
        assert!(RunConfig::resolve("desk", None, vec![], &["ppo.nope=1".into()]).is_err());
        assert!(RunConfig::resolve("desk", None, vec![], &["ppo.lr".into()]).is_err());
        assert!(RunConfig::resolve("desk", None, vec![], &["sitt.alignment_fraction=2".into()]).is_err());
        assert!(RunConfig::resolve("nope", None, vec![], &[]).is_err());
    }

    #[test]
    fn presets_validate_and_hash_differs() {
        let hashes: Vec<String> = RunConfig::PRESETS
            .iter()
            .map(|p| RunConfig::preset(p).unwrap().hash().unwrap())
            .collect();
        assert_ne!(hashes[0], hashes[1]);
        assert_ne!(hashes[1], hashes[2]);
        assert_eq!(RunConfig::preset("paper").unwrap().joint_budget(), 100_000_000);
    }
}
