//! Closed loop with the oracle agents on one threshold scenario, showing
//! beta climbing until the simulator renders every object.
//!
//! cargo run --example oracle_loop -- [scenario_index]

use vidloop::agents::OracleAgents;
use vidloop::generation::Simulator;
use vidloop::scenario::threshold_suite;
use vidloop::workflow::{run_pipeline, LoopConfig, PipelineContext, RunHeader, RunLogWriter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let index: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(6);
    let s = threshold_suite(index + 1).pop().expect("non-empty suite");
    println!("{}: {} (needs beta {:.2})", s.name, s.prompt, s.beta_needed());
    let agents = OracleAgents::new(s.intent.clone().ok_or("scenario has no intent")?)
        .with_initial_design(s.initial_design.clone());
    let cfg = LoopConfig::default();
    let writer = RunLogWriter::in_memory();
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
        max_iterations: cfg.max_iterations,
        config: serde_json::Value::Null,
    };
    let log = run_pipeline(header, &agents, &Simulator::new(s.clone()), &ctx);
    for (i, scales) in log.scale_history().iter().enumerate() {
        let row: Vec<String> = scales.iter().map(|(id, b)| format!("{id}:{b:.2}")).collect();
        println!("design {i}: {}", row.join(" "));
    }
    println!("exit {:?} after {} iteration(s)", log.exit, log.records.len());
    Ok(())
}
