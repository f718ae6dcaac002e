use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    build_run, run_pipeline, ExitStatus, LogLine, PipelineContext, RunHeader, RunInputs, RunLog,
    RunLogWriter, WorkflowError,
};
use crate::config::Config;

/// Name of the log file inside each run directory.
pub const RUN_LOG: &str = "run.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchEntry {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub subset: Option<String>,
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub intent: Option<PathBuf>,
    #[serde(default)]
    pub script: Option<PathBuf>,
}

impl BatchEntry {
    fn inputs(&self) -> RunInputs {
        RunInputs {
            name: self.name.clone(),
            subset: self.subset.clone(),
            prompt: self.prompt.clone(),
            scenario: self.scenario.clone(),
            intent: self.intent.clone(),
            script: self.script.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub runs: Vec<BatchEntry>,
}

impl Manifest {
    /// Fills missing names (`run_001`, ...) and rejects empty or ambiguous lists.
    pub fn normalize(mut self) -> Result<Self, WorkflowError> {
        if self.runs.is_empty() {
            return Err(WorkflowError::ManifestInvalid("no runs listed".into()));
        }
        for (i, r) in self.runs.iter_mut().enumerate() {
            if r.name.trim().is_empty() {
                r.name = format!("run_{:03}", i + 1);
            }
            if r.name.contains(['/', '\\']) || r.name == "." || r.name == ".." {
                return Err(WorkflowError::ManifestInvalid(format!(
                    "run {} has a name that is not a plain directory name: {:?}",
                    i + 1,
                    r.name
                )));
            }
        }
        let mut names: Vec<&str> = self.runs.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(WorkflowError::ManifestInvalid(format!("duplicate run name {:?}", w[0])));
        }
        Ok(self)
    }
}

/// Reads a JSON manifest; relative paths resolve against its directory.
pub fn load_manifest(path: &Path) -> Result<Manifest, WorkflowError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| WorkflowError::ManifestInvalid(format!("{}: {e}", path.display())))?;
    let mut m: Manifest = serde_json::from_str(&text)
        .map_err(|e| WorkflowError::ManifestInvalid(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for r in &mut m.runs {
        for p in [&mut r.scenario, &mut r.intent, &mut r.script].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    m.normalize()
}

/// Runs one pipeline, logging to `<run_dir>/run.jsonl` when a directory is given.
pub fn execute_run(
    cfg: &Config,
    inputs: &RunInputs,
    run_dir: Option<&Path>,
) -> Result<RunLog, crate::Error> {
    let writer = Arc::new(match run_dir {
        Some(dir) => RunLogWriter::create(&dir.join(RUN_LOG))?,
        None => RunLogWriter::in_memory(),
    });
    let setup = build_run(cfg, inputs, writer.clone())?;
    let ctx = PipelineContext {
        cfg: &cfg.run,
        log: &writer,
        run_dir: run_dir.map(Path::to_path_buf),
    };
    Ok(run_pipeline(
        setup.header,
        setup.agents.as_ref(),
        setup.generator.as_ref(),
        &ctx,
    ))
}

/// A run whose setup failed: header and exit lines only.
fn failed_run(cfg: &Config, entry: &BatchEntry, reason: String, run_dir: Option<&Path>) -> RunLog {
    let header = RunHeader {
        name: entry.name.clone(),
        subset: entry.subset.clone().unwrap_or_default(),
        prompt: entry.prompt.clone().unwrap_or_default(),
        backend: cfg.chat.backend.as_str().into(),
        generator: String::new(),
        max_iterations: cfg.run.max_iterations,
        config: serde_json::to_value(cfg).expect("config serializes"),
    };
    let exit = ExitStatus::Error { reason };
    if let Some(dir) = run_dir {
        if let Ok(w) = RunLogWriter::create(&dir.join(RUN_LOG)) {
            let _ = w.write(&LogLine::Header(header.clone()));
            let _ = w.write(&LogLine::Exit {
                exit: exit.clone(),
                timing: Default::default(),
            });
        }
    }
    RunLog {
        header,
        initial_design: None,
        exchanges: Vec::new(),
        records: Vec::new(),
        exit: Some(exit),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub name: String,
    pub subset: String,
    pub prompt: String,
    pub exit: ExitStatus,
    pub iterations: usize,
    /// Log path relative to the batch directory.
    pub log: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub outcomes: Vec<BatchOutcome>,
    pub logs: Vec<RunLog>,
}

/// Runs every entry on up to `workers` threads. A failing run ends with an
/// error exit and does not stop the others. With `out`, each run logs to
/// `<out>/<name>/run.jsonl` and `<out>/batch.json` lists the outcomes in
/// manifest order.
pub fn run_batch(
    manifest: &Manifest,
    cfg: &Config,
    out: Option<&Path>,
    workers: usize,
) -> Result<BatchSummary, crate::Error> {
    let manifest = manifest.clone().normalize()?;
    let runs = &manifest.runs;
    let results: Mutex<Vec<Option<RunLog>>> = Mutex::new(vec![None; runs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, runs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = runs.get(i) else { break };
                let dir = out.map(|o| o.join(&entry.name));
                let log = match execute_run(cfg, &entry.inputs(), dir.as_deref()) {
                    Ok(log) => log,
                    Err(e) => failed_run(cfg, entry, e.to_string(), dir.as_deref()),
                };
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(log);
            });
        }
    });
    let logs: Vec<RunLog> = results
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|l| l.expect("every run finished"))
        .collect();
    let outcomes: Vec<BatchOutcome> = runs
        .iter()
        .zip(&logs)
        .map(|(entry, log)| BatchOutcome {
            name: entry.name.clone(),
            subset: log.header.subset.clone(),
            prompt: log.header.prompt.clone(),
            exit: log.exit.clone().expect("finished runs have an exit"),
            iterations: log.records.len(),
            log: out.map(|_| format!("{}/{RUN_LOG}", entry.name)),
        })
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(&serde_json::json!({ "runs": outcomes }))
            .expect("outcomes serialize");
        std::fs::write(dir.join("batch.json"), text + "\n")?;
    }
    Ok(BatchSummary { outcomes, logs })
}
