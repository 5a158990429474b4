//! Per-iteration metrics: CSV (one row per iteration) plus a JSON run summary.

use std::fs::{File, OpenOptions};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub env_steps: u64,
    pub paired_obs: u64,
    pub episodes: usize,
    /// Mean undiscounted task return of episodes that ended this iteration.
    pub teacher_return: Option<f64>,
    pub shaped_return: Option<f64>,
    pub train_success: Option<f64>,
    /// Mean per-step `KL(teacher ‖ proxy)` over the roll-out.
    pub mean_kl: f64,
    /// Mean per-step `λ₁ · KL`.
    pub mean_kl_penalty: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub student_loss: Option<f64>,
    pub proxy_loss: Option<f64>,
    /// Mean `KL(teacher ‖ student)` over this iteration's roll-out states.
    pub epsilon: Option<f64>,
    pub r_max: f64,
    pub bound: Option<f64>,
    pub eval_teacher_success: Option<f64>,
    pub eval_student_success: Option<f64>,
    /// `J(π_T) − J(π_S)` from discounted evaluation returns.
    pub return_gap: Option<f64>,
}

/// Writes `records` as CSV, replacing the file.
pub fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one record, writing the header first when the file is new or empty.
pub fn append_csv(path: &Path, record: &MetricsRecord) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(record)?;
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let records = r
        .deserialize()
        .collect::<std::result::Result<Vec<MetricsRecord>, _>>()?;
    for w in records.windows(2) {
        if w[1].env_steps < w[0].env_steps || w[1].iteration <= w[0].iteration {
            return Err(Error::InvalidArgument(format!(
                "metrics not monotone at iteration {}",
                w[1].iteration
            )));
        }
    }
    Ok(records)
}

/// End-of-run summary written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub seed: u64,
    pub config_hash: String,
    pub iterations: usize,
    pub env_steps: u64,
    pub paired_obs: u64,
    pub teacher_success: f64,
    pub student_success: f64,
    pub final_epsilon: Option<f64>,
}

pub fn write_summary(path: &Path, s: &RunSummary) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(s)?)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
