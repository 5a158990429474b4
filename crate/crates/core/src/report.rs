//! Success-rate tables across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::metrics::RunSummary;

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub runs: usize,
    pub teacher: (f64, f64),
    pub student: (f64, f64),
}

/// One row per method, in method-name order.
pub fn rows(summaries: &[RunSummary]) -> Vec<ReportRow> {
    let mut by: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        by.entry(s.mode.as_str()).or_default().push(s);
    }
    by.into_iter()
        .map(|(m, v)| ReportRow {
            method: m.to_string(),
            runs: v.len(),
            teacher: mean_std(&v.iter().map(|s| s.teacher_success).collect::<Vec<_>>()),
            student: mean_std(&v.iter().map(|s| s.student_success).collect::<Vec<_>>()),
        })
        .collect()
}

/// Markdown table of success rates as `mean ± std`.
pub fn table(summaries: &[RunSummary]) -> String {
    let mut s = String::from("| Method | Runs | Teacher success | Student success |\n|---|---:|---:|---:|\n");
    for r in rows(summaries) {
        let _ = writeln!(
            s,
            "| {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
            r.method, r.runs, r.teacher.0, r.teacher.1, r.student.0, r.student.1
        );
    }
    s
}
