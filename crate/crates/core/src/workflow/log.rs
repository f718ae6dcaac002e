//! JSONL run log: a header line, the initial design, then chat exchanges
//! and iteration records in the order they happened, then the exit line.

use std::fs::File;
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{ExitStatus, IterationRecord, WorkflowError};
use crate::chat::{ChatExchange, ExchangeSink};
use crate::layout::{canonical_json, StructuredDesign};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub name: String,
    pub subset: String,
    pub prompt: String,
    pub backend: String,
    pub generator: String,
    pub max_iterations: u32,
    /// Effective configuration, as resolved from file and flags.
    pub config: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub total_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header(RunHeader),
    Design { design: StructuredDesign },
    Exchange(ChatExchange),
    Iteration(IterationRecord),
    Exit { exit: ExitStatus, timing: RunTiming },
}

#[derive(Deserialize)]
struct DesignLine {
    design: StructuredDesign,
}

#[derive(Deserialize)]
struct ExitLine {
    exit: ExitStatus,
    #[serde(default)]
    timing: RunTiming,
}

impl LogLine {
    /// Reads one JSONL line. Goes through `Value` because designs key their
    /// scales by integer ids, which serde's buffered tagged-enum path cannot
    /// read back from JSON object keys.
    pub fn parse(raw: &str) -> Result<Self, String> {
        let mut v: Value = serde_json::from_str(raw).map_err(|e| e.to_string())?;
        let kind = v
            .as_object_mut()
            .ok_or("line is not a JSON object")?
            .remove("type")
            .ok_or("missing `type`")?;
        let e = |e: serde_json::Error| e.to_string();
        Ok(match kind.as_str() {
            Some("header") => LogLine::Header(serde_json::from_value(v).map_err(e)?),
            Some("design") => LogLine::Design {
                design: serde_json::from_value::<DesignLine>(v).map_err(e)?.design,
            },
            Some("exchange") => LogLine::Exchange(serde_json::from_value(v).map_err(e)?),
            Some("iteration") => LogLine::Iteration(serde_json::from_value(v).map_err(e)?),
            Some("exit") => {
                let x: ExitLine = serde_json::from_value(v).map_err(e)?;
                LogLine::Exit {
                    exit: x.exit,
                    timing: x.timing,
                }
            }
            _ => return Err(format!("unknown line type {kind}")),
        })
    }
}

/// Appends log lines to a file (when given) and keeps them in memory.
/// Each line is written and flushed with a single call.
pub struct RunLogWriter {
    inner: Mutex<WriterState>,
}

struct WriterState {
    file: Option<File>,
    lines: Vec<LogLine>,
}

impl RunLogWriter {
    pub fn in_memory() -> Self {
        Self {
            inner: Mutex::new(WriterState {
                file: None,
                lines: Vec::new(),
            }),
        }
    }

    /// Creates (truncating) `path`.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            inner: Mutex::new(WriterState {
                file: Some(File::create(path)?),
                lines: Vec::new(),
            }),
        })
    }

    pub fn write(&self, line: &LogLine) -> std::io::Result<()> {
        let mut text = serde_json::to_string(line).map_err(std::io::Error::other)?;
        text.push('\n');
        let mut state = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(f) = state.file.as_mut() {
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        state.lines.push(line.clone());
        Ok(())
    }

    pub fn lines(&self) -> Vec<LogLine> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).lines.clone()
    }

    pub fn exchanges(&self) -> Vec<ChatExchange> {
        self.lines()
            .into_iter()
            .filter_map(|l| match l {
                LogLine::Exchange(e) => Some(e),
                _ => None,
            })
            .collect()
    }
}

impl ExchangeSink for RunLogWriter {
    fn record(&self, exchange: &ChatExchange) -> std::io::Result<()> {
        self.write(&LogLine::Exchange(exchange.clone()))
    }
}

/// A run log read back into memory. `exit` is `None` for a run that stopped
/// before writing its exit line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub initial_design: Option<StructuredDesign>,
    pub exchanges: Vec<ChatExchange>,
    pub records: Vec<IterationRecord>,
    pub exit: Option<ExitStatus>,
}

impl RunLog {
    pub fn parse(text: &str) -> Result<Self, WorkflowError> {
        let mut header = None;
        let mut run: Option<RunLog> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let err = |reason: String| WorkflowError::Log { line, reason };
            let parsed = LogLine::parse(raw).map_err(err)?;
            if let Some(r) = &run {
                if r.exit.is_some() {
                    return Err(err("line after the exit line".into()));
                }
            }
            match parsed {
                LogLine::Header(h) => {
                    if header.is_some() {
                        return Err(err("second header".into()));
                    }
                    header = Some(h.clone());
                    run = Some(RunLog {
                        header: h,
                        initial_design: None,
                        exchanges: Vec::new(),
                        records: Vec::new(),
                        exit: None,
                    });
                }
                other => {
                    let r = run.as_mut().ok_or_else(|| err("first line is not a header".into()))?;
                    match other {
                        LogLine::Header(_) => unreachable!(),
                        LogLine::Design { design } => {
                            if r.initial_design.is_some() || !r.records.is_empty() {
                                return Err(err("design line out of place".into()));
                            }
                            r.initial_design = Some(design);
                        }
                        LogLine::Exchange(e) => r.exchanges.push(e),
                        LogLine::Iteration(rec) => {
                            if r.initial_design.is_none() {
                                return Err(err("iteration before the initial design".into()));
                            }
                            r.records.push(rec);
                        }
                        LogLine::Exit { exit, .. } => r.exit = Some(exit),
                    }
                }
            }
        }
        let run = run.ok_or(WorkflowError::Log {
            line: 0,
            reason: "empty log".into(),
        })?;
        run.check()?;
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorkflowError::Log {
            line: 0,
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Structural invariants that hold for complete runs and prefixes alike.
    pub fn check(&self) -> Result<(), WorkflowError> {
        let bad = |m: String| Err(WorkflowError::Invariant(m));
        if self.records.len() > self.header.max_iterations as usize {
            return bad(format!(
                "{} records exceed max_iterations {}",
                self.records.len(),
                self.header.max_iterations
            ));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.index != i as u32 + 1 {
                return bad(format!("record {} has index {}", i + 1, r.index));
            }
            if let Some(d) = &r.design {
                d.validate().map_err(|e| {
                    WorkflowError::Invariant(format!("record {} design: {e}", r.index))
                })?;
            }
            if r.video.hash.is_empty() {
                return bad(format!("record {} has no video hash", r.index));
            }
            let last = i + 1 == self.records.len();
            if r.design.is_none() && !last {
                return bad(format!("record {} continues without a design", r.index));
            }
            if r.verification.aligned && !last {
                return bad(format!("record {} is aligned but the run continued", r.index));
            }
        }
        if let Some(d) = &self.initial_design {
            d.validate()
                .map_err(|e| WorkflowError::Invariant(format!("initial design: {e}")))?;
        }
        let last_aligned = self.records.last().is_some_and(|r| r.verification.aligned);
        match &self.exit {
            Some(ExitStatus::Aligned) if !last_aligned => {
                bad("exit is aligned but the last report is not".into())
            }
            Some(ExitStatus::MaxIterations) if last_aligned => {
                bad("last report is aligned but exit is max_iterations".into())
            }
            Some(ExitStatus::MaxIterations)
                if self.records.len() != self.header.max_iterations as usize =>
            {
                bad("max_iterations exit before the cap".into())
            }
            _ => Ok(()),
        }
    }

    /// Iteration the run exited aligned at.
    pub fn aligned_at(&self) -> Option<u32> {
        match self.exit {
            Some(ExitStatus::Aligned) => self.records.last().map(|r| r.index),
            _ => None,
        }
    }

    /// Scale of every id after each design, initial design first.
    pub fn scale_history(&self) -> Vec<std::collections::BTreeMap<u32, f64>> {
        self.initial_design
            .iter()
            .chain(self.records.iter().filter_map(|r| r.design.as_ref()))
            .map(|d| d.guidance_scales.clone())
            .collect()
    }
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timing");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// SHA-256 over the canonical JSON of every line with all `timing` members
/// removed. Errors name the first line that is not JSON.
pub fn determinism_hash(text: &str) -> Result<String, WorkflowError> {
    let mut h = Sha256::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let mut v: Value = serde_json::from_str(raw).map_err(|e| WorkflowError::Log {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        strip_timing(&mut v);
        h.update(canonical_json(&v).as_bytes());
        h.update(b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_does_not_affect_hash() {
        let a = r#"{"a":1,"timing":{"ms":3},"b":[{"timing":1,"c":2}]}"#;
        let b = r#"{"b":[{"c":2,"timing":9}],"a":1,"timing":{"ms":5}}"#;
        assert_eq!(determinism_hash(a).unwrap(), determinism_hash(b).unwrap());
        let c = r#"{"a":2}"#;
        assert_ne!(determinism_hash(a).unwrap(), determinism_hash(c).unwrap());
    }

    #[test]
    fn bad_line_is_located() {
        let e = determinism_hash("{}\n{oops").unwrap_err();
        assert!(matches!(e, WorkflowError::Log { line: 2, .. }));
    }
}
