mod common;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use vidloop::agents::{
    AgentError, AgentSuite, CorrectionDraft, DesignOutput, OracleAgents, SuggestionBundle,
    VerificationReport,
};
use vidloop::config::{BackendKind, Config};
use vidloop::generation::{Simulator, VideoArtifact};
use vidloop::layout::StructuredDesign;
use vidloop::scenario::SimScenario;
use vidloop::workflow::{
    apply_emphasis, determinism_hash, execute_run, load_manifest, run_batch, run_pipeline,
    BatchEntry, ExitStatus, Manifest, PipelineContext, RunHeader, RunInputs, RunLog, RunLogWriter,
    WorkflowError, RUN_LOG,
};

use common::fixture;

fn scripted(script: &str, scenario: &str) -> (Config, RunInputs) {
    let mut cfg = Config::default();
    cfg.chat.backend = BackendKind::Scripted;
    let inputs = RunInputs {
        script: Some(fixture(&format!("scripts/{script}.jsonl"))),
        scenario: Some(fixture(&format!("scenarios/{scenario}.json"))),
        ..Default::default()
    };
    (cfg, inputs)
}

fn oracle(scenario: &Path) -> (Config, RunInputs) {
    let inputs = RunInputs {
        scenario: Some(scenario.to_path_buf()),
        ..Default::default()
    };
    (Config::default(), inputs)
}

fn assert_beta_never_decreases(log: &RunLog) {
    let history = log.scale_history();
    for w in history.windows(2) {
        for (id, beta) in &w[1] {
            if let Some(prev) = w[0].get(id) {
                assert!(beta >= prev, "id {id}: {prev} -> {beta}");
            }
        }
    }
}

/// Counts calls and forwards to an inner suite.
struct Counting<'a> {
    inner: &'a dyn AgentSuite,
    corrections: Cell<usize>,
    suggestions: Cell<usize>,
}

impl AgentSuite for Counting<'_> {
    fn design(&self, prompt: &str) -> Result<DesignOutput, AgentError> {
        self.inner.design(prompt)
    }
    fn verify(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        current: &StructuredDesign,
    ) -> Result<VerificationReport, AgentError> {
        self.inner.verify(video, prompt, current)
    }
    fn suggest(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        report: &VerificationReport,
    ) -> Result<SuggestionBundle, AgentError> {
        self.suggestions.set(self.suggestions.get() + 1);
        self.inner.suggest(video, prompt, report)
    }
    fn correct(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        suggestion: &SuggestionBundle,
        previous: &StructuredDesign,
    ) -> Result<CorrectionDraft, AgentError> {
        self.corrections.set(self.corrections.get() + 1);
        self.inner.correct(video, prompt, suggestion, previous)
    }
    fn structure(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        draft: &CorrectionDraft,
        previous: &StructuredDesign,
        prior_scales: &BTreeMap<u32, f64>,
    ) -> Result<StructuredDesign, AgentError> {
        self.inner.structure(video, prompt, draft, previous, prior_scales)
    }
}

fn header(prompt: &str, max_iterations: u32) -> RunHeader {
    RunHeader {
        name: "t".into(),
        subset: String::new(),
        prompt: prompt.into(),
        backend: "oracle".into(),
        generator: "sim".into(),
        max_iterations,
        config: serde_json::Value::Null,
    }
}

fn moon_car() -> SimScenario {
    SimScenario::load(&fixture("scenarios/moon_car.json")).unwrap()
}

#[test]
fn scripted_moon_car_aligns_on_the_second_pass() {
    let (cfg, inputs) = scripted("moon_car", "moon_car");
    let log = execute_run(&cfg, &inputs, None).unwrap();
    assert_eq!(log.records.len(), 2);
    assert_eq!(log.exit, Some(ExitStatus::Aligned));
    let first = &log.records[0];
    assert!(!first.verification.aligned);
    let design = first.design.as_ref().unwrap();
    assert_eq!(design.scale(0), 1.05);
    assert_eq!(first.emphasized, vec![0]);
    assert_eq!(log.exchanges.len(), 6);
    assert!(log.records[1].design.is_none());
}

#[test]
fn aligned_report_exits_before_any_correction() {
    let mut sc = moon_car();
    sc.quantity_error = false;
    sc.motion_flip_threshold = None;
    let agents = OracleAgents::new(sc.intent.clone().unwrap()).with_initial_design(sc.initial_design.clone());
    let counting = Counting {
        inner: &agents,
        corrections: Cell::new(0),
        suggestions: Cell::new(0),
    };
    let writer = RunLogWriter::in_memory();
    let cfg = Default::default();
    let ctx = PipelineContext {
        cfg: &cfg,
        log: &writer,
        run_dir: None,
    };
    let log = run_pipeline(header(&sc.prompt, 9), &counting, &Simulator::new(sc), &ctx);
    assert_eq!(log.records.len(), 1);
    assert_eq!(log.exit, Some(ExitStatus::Aligned));
    assert_eq!(counting.suggestions.get(), 0);
    assert_eq!(counting.corrections.get(), 0);
}

#[test]
fn iteration_cap_is_honoured() {
    let mut sc = moon_car();
    sc.motion_flip_threshold = Some(5.0);
    let agents = OracleAgents::new(sc.intent.clone().unwrap()).with_initial_design(sc.initial_design.clone());
    let writer = RunLogWriter::in_memory();
    let cfg = vidloop::workflow::LoopConfig {
        max_iterations: 3,
        ..Default::default()
    };
    let ctx = PipelineContext {
        cfg: &cfg,
        log: &writer,
        run_dir: None,
    };
    let log = run_pipeline(header(&sc.prompt, 3), &agents, &Simulator::new(sc), &ctx);
    assert_eq!(log.records.len(), 3);
    assert_eq!(log.exit, Some(ExitStatus::MaxIterations));
    assert!(log.records.iter().all(|r| !r.verification.aligned));
    assert_beta_never_decreases(&log);
    log.check().unwrap();
}

#[test]
fn two_emphasis_steps_reach_exactly_one_point_one() {
    let mut d = common::transcript("moon_car_design");
    for _ in 0..2 {
        d.emphasis = vec![0];
        d = apply_emphasis(&d, 0.05).unwrap();
    }
    assert_eq!(d.scale(0), 1.10);
    assert!(d.emphasis.is_empty());
}

#[test]
fn every_line_prefix_of_a_log_is_a_valid_log() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, inputs) = scripted("rabbit_officer", "rabbit_officer");
    execute_run(&cfg, &inputs, Some(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join(RUN_LOG)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() > 3);
    for n in 1..=lines.len() {
        let prefix = lines[..n].join("\n") + "\n";
        let log = RunLog::parse(&prefix).unwrap_or_else(|e| panic!("prefix of {n} lines: {e}"));
        assert_eq!(log.exit.is_some(), n == lines.len());
    }
}

#[test]
fn logged_runs_satisfy_the_exit_rule_and_keep_beta() {
    let dir = tempfile::tempdir().unwrap();
    for (i, (script, scenario)) in [
        ("moon_car", "moon_car"),
        ("moon_car_full", "moon_car"),
        ("rabbit_officer", "rabbit_officer"),
    ]
    .into_iter()
    .enumerate()
    {
        let (cfg, inputs) = scripted(script, scenario);
        let run_dir = dir.path().join(format!("r{i}"));
        execute_run(&cfg, &inputs, Some(&run_dir)).unwrap();
        let log = RunLog::load(&run_dir.join(RUN_LOG)).unwrap();
        let last_aligned = log.records.last().unwrap().verification.aligned;
        assert_eq!(log.exit == Some(ExitStatus::Aligned), last_aligned, "{script}");
        assert_beta_never_decreases(&log);
    }
}

#[test]
fn same_seed_same_determinism_hash() {
    let dir = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let (cfg, inputs) = scripted("rabbit_officer", "rabbit_officer");
        let run_dir = dir.path().join(run);
        execute_run(&cfg, &inputs, Some(&run_dir)).unwrap();
        let text = std::fs::read_to_string(run_dir.join(RUN_LOG)).unwrap();
        hashes.push(determinism_hash(&text).unwrap());
    }
    assert_eq!(hashes[0], hashes[1]);

    let (mut cfg, inputs) = scripted("rabbit_officer", "rabbit_officer");
    cfg.generator.seed = Some(12345);
    let run_dir = dir.path().join("c");
    execute_run(&cfg, &inputs, Some(&run_dir)).unwrap();
    let text = std::fs::read_to_string(run_dir.join(RUN_LOG)).unwrap();
    assert_ne!(determinism_hash(&text).unwrap(), hashes[0]);
}

#[test]
fn unparseable_suggestion_falls_back_to_the_previous_design() {
    let dir = tempfile::tempdir().unwrap();
    let original = common::read_fixture("scripts/moon_car.jsonl");
    let lines: Vec<&str> = original.lines().collect();
    let junk = r#"{"text": "I would rather not say."}"#;
    let script = [lines[0], lines[1], junk, junk, lines[5]].join("\n") + "\n";
    let path = dir.path().join("script.jsonl");
    std::fs::write(&path, script).unwrap();

    let (cfg, mut inputs) = scripted("moon_car", "moon_car");
    inputs.script = Some(path);
    let log = execute_run(&cfg, &inputs, None).unwrap();
    assert_eq!(log.exit, Some(ExitStatus::Aligned));
    assert_eq!(log.records.len(), 2);
    let first = &log.records[0];
    assert!(first.fallback.is_some());
    assert!(first.correction.is_none());
    let next = first.design.as_ref().unwrap();
    let initial = log.initial_design.as_ref().unwrap();
    assert_eq!(next.keyframes, initial.keyframes);
    assert_eq!(next.scale(0), 1.05);
}

#[test]
fn batch_runs_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest {
        runs: vec![
            BatchEntry {
                name: "broken".into(),
                subset: Some("x".into()),
                prompt: None,
                scenario: Some(dir.path().join("missing.json")),
                intent: None,
                script: None,
            },
            BatchEntry {
                name: "moon".into(),
                subset: None,
                prompt: None,
                scenario: Some(fixture("scenarios/moon_car.json")),
                intent: None,
                script: None,
            },
        ],
    };
    let out = dir.path().join("batch");
    let summary = run_batch(&manifest, &Config::default(), Some(&out), 2).unwrap();
    assert!(matches!(summary.outcomes[0].exit, ExitStatus::Error { .. }));
    assert_eq!(summary.outcomes[1].exit, ExitStatus::Aligned);
    for name in ["broken", "moon"] {
        RunLog::load(&out.join(name).join(RUN_LOG)).unwrap();
    }
    let listed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("batch.json")).unwrap()).unwrap();
    assert_eq!(listed["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn suite_manifest_runs_in_parallel() {
    let manifest = load_manifest(&fixture("scenarios/suite/manifest.json")).unwrap();
    assert_eq!(manifest.runs.len(), 50);
    let small = Manifest {
        runs: manifest.runs[..2].to_vec(),
    };
    let summary = run_batch(&small, &Config::default(), None, 4).unwrap();
    assert_eq!(summary.outcomes.len(), 2);
    assert!(summary.outcomes.iter().all(|o| o.exit == ExitStatus::Aligned));
    assert_eq!(summary.outcomes[0].name, small.runs[0].name);
}

#[test]
fn empty_or_ambiguous_manifests_are_rejected() {
    let empty = Manifest { runs: vec![] };
    let err = run_batch(&empty, &Config::default(), None, 1).unwrap_err();
    assert!(matches!(
        err,
        vidloop::Error::Workflow(WorkflowError::ManifestInvalid(_))
    ));
    let entry = |name: &str| BatchEntry {
        name: name.into(),
        subset: None,
        prompt: Some("p".into()),
        scenario: None,
        intent: None,
        script: None,
    };
    for runs in [vec![entry("a"), entry("a")], vec![entry("../x")]] {
        assert!(matches!(
            Manifest { runs }.normalize(),
            Err(WorkflowError::ManifestInvalid(_))
        ));
    }
    let named = Manifest {
        runs: vec![entry(""), entry("")],
    }
    .normalize()
    .unwrap();
    assert_eq!(named.runs[1].name, "run_002");
}

#[test]
fn saved_frames_land_in_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, inputs) = scripted("moon_car", "moon_car");
    cfg.run.save_frames = true;
    let log = execute_run(&cfg, &inputs, Some(dir.path())).unwrap();
    let rel = log.records[0].video.path.clone().unwrap();
    let n = std::fs::read_dir(dir.path().join(rel)).unwrap().count();
    assert_eq!(n, 65);
}

#[test]
fn oracle_run_through_shared_writer() {
    let (cfg, inputs) = oracle(&fixture("scenarios/rabbit_officer.json"));
    let writer = Arc::new(RunLogWriter::in_memory());
    let setup = vidloop::workflow::build_run(&cfg, &inputs, writer.clone()).unwrap();
    let ctx = PipelineContext {
        cfg: &cfg.run,
        log: &writer,
        run_dir: None,
    };
    let log = run_pipeline(setup.header, setup.agents.as_ref(), setup.generator.as_ref(), &ctx);
    assert_eq!(log.exit, Some(ExitStatus::Aligned));
    assert_eq!(writer.lines().len(), 2 + log.records.len() + 1);
}
