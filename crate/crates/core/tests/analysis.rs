mod common;

use std::path::PathBuf;

use proptest::prelude::*;
use vidloop::agents::OracleAgents;
use vidloop::analysis::{
    build_report, correction_counts, corrected_ratio, emit_report, load_runs, ratio_table,
    AnalysisError, LoadedRun,
};
use vidloop::config::{BackendKind, Config};
use vidloop::generation::Simulator;
use vidloop::layout::diff_designs;
use vidloop::scenario::{threshold_suite, SimScenario};
use vidloop::workflow::{
    execute_run, run_pipeline, LoopConfig, PipelineContext, RunHeader, RunInputs, RunLog,
    RunLogWriter, RUN_LOG,
};

use common::fixture;

fn oracle_run(s: &SimScenario, max_iterations: u32) -> RunLog {
    let agents = OracleAgents::new(s.intent.clone().unwrap()).with_initial_design(s.initial_design.clone());
    let writer = RunLogWriter::in_memory();
    let cfg = LoopConfig {
        max_iterations,
        ..Default::default()
    };
    let ctx = PipelineContext {
        cfg: &cfg,
        log: &writer,
        run_dir: None,
    };
    let header = RunHeader {
        name: s.name.clone(),
        subset: s.subset.clone(),
        prompt: s.prompt.clone(),
        backend: "oracle".into(),
        generator: "sim".into(),
        max_iterations,
        config: serde_json::Value::Null,
    };
    run_pipeline(header, &agents, &Simulator::new(s.clone()), &ctx)
}

fn rabbit_log() -> RunLog {
    let mut cfg = Config::default();
    cfg.chat.backend = BackendKind::Scripted;
    let inputs = RunInputs {
        script: Some(fixture("scripts/rabbit_officer.jsonl")),
        scenario: Some(fixture("scenarios/rabbit_officer.json")),
        ..Default::default()
    };
    execute_run(&cfg, &inputs, None).unwrap()
}

fn ratio_oracle(logs: &[RunLog], i: u32) -> f64 {
    let done = logs
        .iter()
        .filter(|l| {
            l.exit == Some(vidloop::workflow::ExitStatus::Aligned)
                && l.records.last().is_some_and(|r| r.index <= i)
        })
        .count();
    done as f64 / logs.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn corrected_ratio_is_nondecreasing(
        picks in prop::collection::vec((0usize..50, 1u32..=9), 1..20),
    ) {
        let suite = threshold_suite(50);
        let logs: Vec<RunLog> = picks.iter().map(|&(i, cap)| oracle_run(&suite[i], cap)).collect();
        let mut prev = 0.0;
        for i in 1..=9 {
            let r = corrected_ratio(&logs, i).unwrap();
            prop_assert_eq!(r, ratio_oracle(&logs, i));
            prop_assert!(r >= prev);
            prev = r;
        }
    }
}

#[test]
fn twenty_of_fifty_is_point_four() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios");
    let easy = SimScenario::load(&dir.join("moon_car.json")).unwrap();
    let mut hard = easy.clone();
    hard.motion_flip_threshold = Some(9.0);
    let aligned = oracle_run(&easy, 9);
    let capped = oracle_run(&hard, 9);
    let logs: Vec<RunLog> = std::iter::repeat_n(aligned, 20)
        .chain(std::iter::repeat_n(capped, 30))
        .collect();
    assert_eq!(corrected_ratio(&logs, 9).unwrap(), 0.4);
    assert_eq!(corrected_ratio(&logs, 1).unwrap(), 0.0);
}

#[test]
fn empty_input_is_an_error() {
    assert!(matches!(corrected_ratio(&[], 1), Err(AnalysisError::EmptyInput)));
    assert!(matches!(ratio_table(&[]), Err(AnalysisError::EmptyInput)));
}

#[test]
fn first_iteration_counts_layout_only() {
    let logs: Vec<RunLog> = threshold_suite(50).iter().map(|s| oracle_run(s, 9)).collect();
    let c = correction_counts(&logs, 1);
    assert_eq!((c.runs, c.layout, c.guidance_scale, c.prompt), (50, 50, 0, 0));
    let later = correction_counts(&logs, 2);
    assert_eq!(later.runs, logs.iter().filter(|l| l.records.len() >= 2).count());
}

#[test]
fn rabbit_second_iteration_changes_all_three() {
    let log = rabbit_log();
    let c = correction_counts(std::slice::from_ref(&log), 2);
    assert_eq!((c.runs, c.layout, c.guidance_scale, c.prompt), (1, 1, 1, 1));
    let c1 = correction_counts(std::slice::from_ref(&log), 1);
    assert_eq!((c1.layout, c1.guidance_scale, c1.prompt), (1, 0, 0));
}

#[test]
fn identical_designs_count_nothing() {
    let mut log = rabbit_log();
    let d = log.records[0].design.clone().unwrap();
    log.records[1].diff = Some(diff_designs(&d, &d));
    let c = correction_counts(&[log], 2);
    assert_eq!((c.runs, c.layout, c.guidance_scale, c.prompt), (1, 0, 0, 0));
}

#[test]
fn table_has_one_row_per_iteration_and_column_per_subset() {
    let logs: Vec<RunLog> = threshold_suite(50)
        .iter()
        .filter(|s| s.subset == "motion" || s.subset == "existence")
        .map(|s| oracle_run(s, 9))
        .collect();
    let csv = ratio_table(&logs).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "iteration,existence,motion");
    assert_eq!(rows.len(), 10);
    for (i, row) in rows[1..].iter().enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[0], (i + 1).to_string());
    }
    assert_eq!(rows[9], "9,1.000000,1.000000");
}

fn write_batch(dir: &std::path::Path) {
    for (i, s) in threshold_suite(10).iter().enumerate() {
        let log_dir = dir.join(format!("run_{i:02}"));
        let path = log_dir.join(RUN_LOG);
        std::fs::create_dir_all(&log_dir).unwrap();
        let writer = RunLogWriter::create(&path).unwrap();
        let agents = OracleAgents::new(s.intent.clone().unwrap());
        let cfg = LoopConfig::default();
        let ctx = PipelineContext {
            cfg: &cfg,
            log: &writer,
            run_dir: None,
        };
        let header = RunHeader {
            name: s.name.clone(),
            subset: s.subset.clone(),
            prompt: s.prompt.clone(),
            backend: "oracle".into(),
            generator: "sim".into(),
            max_iterations: 9,
            config: serde_json::Value::Null,
        };
        run_pipeline(header, &agents, &Simulator::new(s.clone()), &ctx);
    }
}

#[test]
fn report_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    write_batch(&dir.path().join("runs"));
    let runs = load_runs(&[dir.path().join("runs")]).unwrap();
    assert_eq!(runs.len(), 10);
    emit_report(&runs, &dir.path().join("a")).unwrap();
    let again = load_runs(&[dir.path().join("runs"), dir.path().join("runs/run_03")]).unwrap();
    assert_eq!(again.len(), 10);
    emit_report(&again, &dir.path().join("b")).unwrap();
    for f in ["corrected_ratio.csv", "correction_counts.csv", "runs.csv", "summary.txt"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn corrupt_line_is_reported_with_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write_batch(dir.path());
    let path = dir.path().join("run_04").join(RUN_LOG);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[2] = "{\"type\": \"iteration\", \"index\": ".into();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = load_runs(&[dir.path().to_path_buf()]).unwrap_err();
    match &err {
        AnalysisError::Corrupt { path: p, line, .. } => {
            assert!(p.ends_with("run_04/run.jsonl"));
            assert_eq!(*line, 3);
        }
        other => panic!("{other}"),
    }
    assert!(err.to_string().contains("run.jsonl:3:"));
}

#[test]
fn summary_counts_exits() {
    let log = rabbit_log();
    let runs = vec![LoadedRun {
        path: "r/run.jsonl".into(),
        log,
    }];
    let report = build_report(&runs).unwrap();
    assert!(report.summary.contains("runs: 1\naligned: 1\n"));
    assert!(report.runs_csv.lines().nth(1).unwrap().starts_with("r/run.jsonl,"));
}
