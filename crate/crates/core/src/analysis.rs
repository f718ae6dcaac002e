//! Loop metrics over run logs: the cumulative corrected ratio per iteration
//! and counts of which guidance types each redesign changed.
//!
//! `emit_report` writes four files:
//!
//! | file | columns |
//! |------|---------|
//! | `corrected_ratio.csv` | `iteration`, then one column per subset (sorted) |
//! | `correction_counts.csv` | `iteration,runs,layout,guidance_scale,prompt,layout_share,guidance_scale_share,prompt_share` |
//! | `runs.csv` | `log,name,subset,exit,iterations,aligned_at,max_beta` |
//! | `summary.txt` | human-readable totals |
//!
//! Ratios and shares carry six decimals. A run with an empty subset is
//! reported under `default`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::workflow::{ExitStatus, RunLog, WorkflowError, RUN_LOG};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no run logs to analyze")]
    EmptyInput,
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A parsed log and where it came from.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub path: PathBuf,
    pub log: RunLog,
}

/// Every `run.jsonl` under `dirs`, in path order. A path listed twice (or
/// reached from two roots) is loaded once.
pub fn load_runs(dirs: &[PathBuf]) -> Result<Vec<LoadedRun>, AnalysisError> {
    let mut paths = Vec::new();
    for dir in dirs {
        if dir.is_file() {
            paths.push(dir.clone());
            continue;
        }
        if !dir.exists() {
            return Err(AnalysisError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} does not exist", dir.display()),
            )));
        }
        for entry in WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(|e| AnalysisError::Io(e.into()))?;
            if entry.file_type().is_file() && entry.file_name() == RUN_LOG {
                paths.push(entry.into_path());
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    paths.retain(|p| seen.insert(p.canonicalize().unwrap_or_else(|_| p.clone())));
    paths.sort();
    if paths.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    paths
        .into_iter()
        .map(|path| {
            let text = std::fs::read_to_string(&path)?;
            let log = RunLog::parse(&text).map_err(|e| {
                let (line, reason) = match e {
                    WorkflowError::Log { line, reason } => (line, reason),
                    other => (0, other.to_string()),
                };
                AnalysisError::Corrupt {
                    path: path.display().to_string(),
                    line,
                    reason,
                }
            })?;
            Ok(LoadedRun { path, log })
        })
        .collect()
}

/// Fraction of runs that exited aligned at iteration `i` or earlier.
pub fn corrected_ratio(logs: &[RunLog], i: u32) -> Result<f64, AnalysisError> {
    if logs.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let done = logs
        .iter()
        .filter(|l| l.aligned_at().is_some_and(|at| at <= i))
        .count();
    Ok(done as f64 / logs.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionCounts {
    /// Runs with a record at this iteration.
    pub runs: usize,
    pub layout: usize,
    pub guidance_scale: usize,
    pub prompt: usize,
}

impl CorrectionCounts {
    pub fn total(&self) -> usize {
        self.layout + self.guidance_scale + self.prompt
    }
}

/// At iteration 1 every run with a first record counts towards layout only;
/// the initial design carries nothing else. From iteration 2 on, a run
/// counts towards each type its iteration-`i` diff flags.
pub fn correction_counts(logs: &[RunLog], i: u32) -> CorrectionCounts {
    let mut c = CorrectionCounts::default();
    for log in logs {
        let Some(rec) = log.records.iter().find(|r| r.index == i) else {
            continue;
        };
        c.runs += 1;
        if i == 1 {
            c.layout += 1;
            continue;
        }
        if let Some(d) = &rec.diff {
            c.layout += usize::from(d.layout_changed);
            c.guidance_scale += usize::from(d.guidance_changed);
            c.prompt += usize::from(d.prompt_changed);
        }
    }
    c
}

fn subset_of(log: &RunLog) -> String {
    if log.header.subset.is_empty() {
        "default".into()
    } else {
        log.header.subset.clone()
    }
}

fn share(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * part as f64 / total as f64
    }
}

fn exit_label(e: &Option<ExitStatus>) -> &'static str {
    match e {
        Some(ExitStatus::Aligned) => "aligned",
        Some(ExitStatus::MaxIterations) => "max_iterations",
        Some(ExitStatus::Error { .. }) => "error",
        None => "incomplete",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Iteration horizon: the largest `max_iterations` among the runs.
pub fn horizon(logs: &[RunLog]) -> u32 {
    logs.iter().map(|l| l.header.max_iterations).max().unwrap_or(1)
}

pub fn ratio_table(logs: &[RunLog]) -> Result<String, AnalysisError> {
    if logs.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut by_subset: BTreeMap<String, Vec<RunLog>> = BTreeMap::new();
    for l in logs {
        by_subset.entry(subset_of(l)).or_default().push(l.clone());
    }
    let mut out = String::from("iteration");
    for s in by_subset.keys() {
        let _ = write!(out, ",{}", csv_field(s));
    }
    out.push('\n');
    for i in 1..=horizon(logs) {
        let _ = write!(out, "{i}");
        for group in by_subset.values() {
            let _ = write!(out, ",{:.6}", corrected_ratio(group, i)?);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn counts_table(logs: &[RunLog]) -> String {
    let mut out = String::from(
        "iteration,runs,layout,guidance_scale,prompt,layout_share,guidance_scale_share,prompt_share\n",
    );
    for i in 1..=horizon(logs) {
        let c = correction_counts(logs, i);
        let t = c.total();
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{:.6},{:.6},{:.6}",
            c.runs,
            c.layout,
            c.guidance_scale,
            c.prompt,
            share(c.layout, t),
            share(c.guidance_scale, t),
            share(c.prompt, t)
        );
    }
    out
}

pub fn runs_table(runs: &[LoadedRun]) -> String {
    let mut out = String::from("log,name,subset,exit,iterations,aligned_at,max_beta\n");
    for r in runs {
        let l = &r.log;
        let max_beta = l
            .scale_history()
            .iter()
            .flat_map(|m| m.values().copied())
            .fold(f64::NAN, f64::max);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.path.display().to_string()),
            csv_field(&l.header.name),
            csv_field(&subset_of(l)),
            exit_label(&l.exit),
            l.records.len(),
            l.aligned_at().map_or(String::new(), |a| a.to_string()),
            if max_beta.is_nan() { String::new() } else { format!("{max_beta:.6}") }
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub ratio_csv: String,
    pub counts_csv: String,
    pub runs_csv: String,
    pub summary: String,
}

pub fn build_report(runs: &[LoadedRun]) -> Result<Report, AnalysisError> {
    let logs: Vec<RunLog> = runs.iter().map(|r| r.log.clone()).collect();
    let ratio_csv = ratio_table(&logs)?;
    let counts_csv = counts_table(&logs);
    let runs_csv = runs_table(runs);
    let mut summary = String::new();
    let n = logs.len();
    let count = |label: &str| logs.iter().filter(|l| exit_label(&l.exit) == label).count();
    let _ = writeln!(summary, "runs: {n}");
    for label in ["aligned", "max_iterations", "error", "incomplete"] {
        let _ = writeln!(summary, "{label}: {}", count(label));
    }
    let h = horizon(&logs);
    let _ = writeln!(
        summary,
        "corrected ratio at iteration {h}: {:.6}",
        corrected_ratio(&logs, h)?
    );
    Ok(Report {
        ratio_csv,
        counts_csv,
        runs_csv,
        summary,
    })
}

pub fn emit_report(runs: &[LoadedRun], out: &Path) -> Result<Report, AnalysisError> {
    let report = build_report(runs)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("corrected_ratio.csv"), &report.ratio_csv)?;
    std::fs::write(out.join("correction_counts.csv"), &report.counts_csv)?;
    std::fs::write(out.join("runs.csv"), &report.runs_csv)?;
    std::fs::write(out.join("summary.txt"), &report.summary)?;
    Ok(report)
}
