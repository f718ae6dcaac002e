//! The Design, Generation, Redesign loop and its run log.

mod batch;
mod log;
mod setup;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    AgentError, AgentSuite, CorrectionDraft, Route, SuggestionBundle, VerificationReport,
};
use crate::generation::{Generator, InjectedFailure, VideoArtifact};
use crate::layout::{diff_designs, quantize_scale, DesignDiff, StructuredDesign, BETA_INIT, BETA_STEP};

pub use batch::{
    execute_run, load_manifest, run_batch, BatchEntry, BatchOutcome, BatchSummary, Manifest, RUN_LOG,
};
pub use log::{determinism_hash, LogLine, RunHeader, RunLog, RunLogWriter, RunTiming};
pub use setup::{build_run, RunInputs, RunSetup};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkflowError {
    #[error("emphasis names id {id}, which the design does not contain")]
    UnknownId { id: u32 },
    #[error("run log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error("run log invariant violated: {0}")]
    Invariant(String),
    #[error("invalid manifest: {0}")]
    ManifestInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub max_iterations: u32,
    pub beta_init: f64,
    pub beta_step: f64,
    /// Write every generated frame as PNG under the run directory.
    pub save_frames: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 9,
            beta_init: BETA_INIT,
            beta_step: BETA_STEP,
            save_frames: false,
        }
    }
}

impl LoopConfig {
    /// `Err((key, reason))` for the first bad field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.max_iterations < 1 {
            return Err(("max_iterations", "must be at least 1".into()));
        }
        if !(self.beta_init.is_finite() && self.beta_init >= BETA_INIT) {
            return Err(("beta_init", format!("must be a number >= {BETA_INIT}")));
        }
        if !(self.beta_step.is_finite() && self.beta_step > 0.0) {
            return Err(("beta_step", "must be a positive number".into()));
        }
        Ok(())
    }
}

/// Adds `step` to the scale of every emphasized id and clears the list.
pub fn apply_emphasis(design: &StructuredDesign, step: f64) -> Result<StructuredDesign, WorkflowError> {
    let ids = design.object_ids();
    let mut out = design.clone();
    for &id in &design.emphasis {
        if !ids.contains(&id) {
            return Err(WorkflowError::UnknownId { id });
        }
        let beta = out.scale(id);
        out.guidance_scales.insert(id, quantize_scale(beta + step));
    }
    out.emphasis.clear();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExitStatus {
    Aligned,
    MaxIterations,
    Error { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExitDecision {
    Continue,
    Exit(ExitStatus),
}

pub fn should_exit(report: &VerificationReport, iteration: u32, cfg: &LoopConfig) -> ExitDecision {
    if report.aligned {
        ExitDecision::Exit(ExitStatus::Aligned)
    } else if iteration >= cfg.max_iterations {
        ExitDecision::Exit(ExitStatus::MaxIterations)
    } else {
        ExitDecision::Continue
    }
}

/// Where a generated video can be found again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRef {
    pub hash: String,
    pub generator: String,
    pub design_hash: String,
    pub frame_count: u32,
    /// Frame directory relative to the run directory, when frames were saved.
    pub path: Option<String>,
    pub injected: Vec<InjectedFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTiming {
    pub generate_ms: u64,
    pub redesign_ms: u64,
}

/// One pass: the video generated from the current design, its verification
/// and, unless the loop exits here, the redesign that produced the next design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub video: VideoRef,
    pub verification: VerificationReport,
    pub suggestion: Option<SuggestionBundle>,
    pub route: Option<Route>,
    pub correction: Option<CorrectionDraft>,
    /// Next design, emphasis already converted into scales.
    pub design: Option<StructuredDesign>,
    pub emphasized: Vec<u32>,
    pub diff: Option<DesignDiff>,
    /// Set when a redesign reply could not be parsed and the previous
    /// design was reused with the flagged objects emphasized.
    pub fallback: Option<String>,
    pub timing: IterationTiming,
}

/// Loop inputs besides the agents and the generator.
pub struct PipelineContext<'a> {
    pub cfg: &'a LoopConfig,
    pub log: &'a RunLogWriter,
    /// Run directory for saved frames.
    pub run_dir: Option<PathBuf>,
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

fn recoverable(e: &AgentError) -> bool {
    matches!(e, AgentError::ParseFailure { .. } | AgentError::RouteUnparseable { .. })
}

struct Redesign {
    suggestion: Option<SuggestionBundle>,
    correction: Option<CorrectionDraft>,
    structured: StructuredDesign,
    fallback: Option<String>,
}

fn redesign(
    agents: &dyn AgentSuite,
    video: &VideoArtifact,
    prompt: &str,
    report: &VerificationReport,
    current: &StructuredDesign,
    book: &BTreeMap<u32, f64>,
) -> Result<Redesign, AgentError> {
    let mut suggestion = None;
    let mut correction = None;
    let attempt = (|| {
        let s = agents.suggest(video, prompt, report)?;
        suggestion = Some(s.clone());
        let c = agents.correct(video, prompt, &s, current)?;
        correction = Some(c.clone());
        agents.structure(video, prompt, &c, current, book)
    })();
    match attempt {
        Ok(structured) => Ok(Redesign {
            suggestion,
            correction,
            structured,
            fallback: None,
        }),
        Err(e) if recoverable(&e) => {
            let mut structured = current.clone();
            let flagged = report.flagged_ids();
            structured.emphasis = if flagged.is_empty() {
                current.object_ids()
            } else {
                flagged
                    .into_iter()
                    .filter(|id| current.object_ids().contains(id))
                    .collect()
            };
            Ok(Redesign {
                suggestion,
                correction,
                structured,
                fallback: Some(e.to_string()),
            })
        }
        Err(e) => Err(e),
    }
}

/// Scales never drop below what an id already had in this run.
fn carry_scales(design: &mut StructuredDesign, book: &BTreeMap<u32, f64>) {
    for id in design.object_ids() {
        let prior = book.get(&id).copied().unwrap_or(BETA_INIT);
        let beta = design.scale(id).max(prior);
        design.guidance_scales.insert(id, beta);
    }
    let ids = design.object_ids();
    design.guidance_scales.retain(|id, _| ids.contains(id));
}

/// Runs the loop for `prompt`. The header is written first; every record is
/// on disk before the next iteration starts.
pub fn run_pipeline(
    header: RunHeader,
    agents: &dyn AgentSuite,
    generator: &dyn Generator,
    ctx: &PipelineContext<'_>,
) -> RunLog {
    let mut run = RunLog {
        header: header.clone(),
        initial_design: None,
        exchanges: Vec::new(),
        records: Vec::new(),
        exit: None,
    };
    let started = Instant::now();
    let exit = match drive(&mut run, agents, generator, ctx) {
        Ok(status) => status,
        Err(reason) => ExitStatus::Error { reason },
    };
    let _ = ctx.log.write(&LogLine::Exit {
        exit: exit.clone(),
        timing: RunTiming {
            total_ms: elapsed_ms(started),
        },
    });
    run.exchanges = ctx.log.exchanges();
    run.exit = Some(exit);
    run
}

fn drive(
    run: &mut RunLog,
    agents: &dyn AgentSuite,
    generator: &dyn Generator,
    ctx: &PipelineContext<'_>,
) -> Result<ExitStatus, String> {
    let cfg = ctx.cfg;
    cfg.validate().map_err(|(k, r)| format!("loop.{k}: {r}"))?;
    let io = |e: std::io::Error| format!("writing run log: {e}");
    ctx.log.write(&LogLine::Header(run.header.clone())).map_err(io)?;
    let prompt = run.header.prompt.clone();

    let mut current = agents.design(&prompt).map_err(|e| e.to_string())?.design;
    current.emphasis.clear();
    for beta in current.guidance_scales.values_mut() {
        *beta = cfg.beta_init;
    }
    let mut book = current.guidance_scales.clone();
    ctx.log
        .write(&LogLine::Design { design: current.clone() })
        .map_err(io)?;
    run.initial_design = Some(current.clone());

    for index in 1..=cfg.max_iterations {
        let t = Instant::now();
        let video = generator.generate(&current).map_err(|e| e.to_string())?;
        let path = match (&ctx.run_dir, cfg.save_frames) {
            (Some(dir), true) => {
                let rel = format!("iter_{index:02}");
                video.save_frames(&dir.join(&rel)).map_err(io)?;
                Some(rel)
            }
            _ => None,
        };
        let video_ref = VideoRef {
            hash: video.content_hash(),
            generator: video.provenance.generator.clone(),
            design_hash: video.provenance.design_hash.clone(),
            frame_count: video.frame_count,
            path,
            injected: video.injected.clone(),
        };
        let generate_ms = elapsed_ms(t);

        let t = Instant::now();
        let report = agents
            .verify(&video, &prompt, &current)
            .map_err(|e| e.to_string())?;
        let mut record = IterationRecord {
            index,
            video: video_ref,
            verification: report.clone(),
            suggestion: None,
            route: None,
            correction: None,
            design: None,
            emphasized: Vec::new(),
            diff: None,
            fallback: None,
            timing: IterationTiming {
                generate_ms,
                redesign_ms: 0,
            },
        };

        if let ExitDecision::Exit(status) = should_exit(&report, index, cfg) {
            record.timing.redesign_ms = elapsed_ms(t);
            ctx.log.write(&LogLine::Iteration(record.clone())).map_err(io)?;
            run.records.push(record);
            return Ok(status);
        }

        let r = redesign(agents, &video, &prompt, &report, &current, &book)
            .map_err(|e| e.to_string())?;
        let mut structured = r.structured;
        carry_scales(&mut structured, &book);
        let emphasized = structured.emphasis.clone();
        let next = apply_emphasis(&structured, cfg.beta_step).map_err(|e| e.to_string())?;
        next.validate().map_err(|e| e.to_string())?;
        for (&id, &beta) in &next.guidance_scales {
            let slot = book.entry(id).or_insert(beta);
            *slot = slot.max(beta);
        }

        record.route = r.suggestion.as_ref().map(|s| s.route);
        record.suggestion = r.suggestion;
        record.correction = r.correction;
        record.diff = Some(diff_designs(&current, &next));
        record.design = Some(next.clone());
        record.emphasized = emphasized;
        record.fallback = r.fallback;
        record.timing.redesign_ms = elapsed_ms(t);
        ctx.log.write(&LogLine::Iteration(record.clone())).map_err(io)?;
        run.records.push(record);
        current = next;
    }
    unreachable!("the last iteration always exits")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::parse_design_text;

    fn design() -> StructuredDesign {
        parse_design_text("Frame 1: [{'id': 0, 'name': 'car', 'box': [0, 0, 10, 10]}]").unwrap()
    }

    #[test]
    fn emphasis_steps_scale() {
        let mut d = design();
        d.emphasis = vec![0];
        let once = apply_emphasis(&d, BETA_STEP).unwrap();
        assert_eq!(once.scale(0), 1.05);
        assert!(once.emphasis.is_empty());
        let mut again = once.clone();
        again.emphasis = vec![0];
        assert_eq!(apply_emphasis(&again, BETA_STEP).unwrap().scale(0), 1.10);
        assert_eq!(apply_emphasis(&design(), BETA_STEP).unwrap(), design());
    }

    #[test]
    fn unknown_emphasis_id() {
        let mut d = design();
        d.emphasis = vec![3];
        assert_eq!(
            apply_emphasis(&d, BETA_STEP),
            Err(WorkflowError::UnknownId { id: 3 })
        );
    }

    #[test]
    fn exit_rule() {
        let cfg = LoopConfig::default();
        let ok = VerificationReport::aligned("fine");
        let bad = VerificationReport {
            aligned: false,
            ..ok.clone()
        };
        assert_eq!(should_exit(&ok, 1, &cfg), ExitDecision::Exit(ExitStatus::Aligned));
        assert_eq!(
            should_exit(&bad, 9, &cfg),
            ExitDecision::Exit(ExitStatus::MaxIterations)
        );
        assert_eq!(should_exit(&bad, 8, &cfg), ExitDecision::Continue);
    }
}
