//! Replays recorded agent replies through the loop against the simulator.
//!
//! cargo run --example scripted_loop -- [moon_car|rabbit_officer]

use std::path::PathBuf;

use vidloop::config::{BackendKind, Config};
use vidloop::workflow::{execute_run, RunInputs};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "rabbit_officer".into());
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut cfg = Config::default();
    cfg.chat.backend = BackendKind::Scripted;
    let inputs = RunInputs {
        script: Some(root.join(format!("scripts/{name}.jsonl"))),
        scenario: Some(root.join(format!("scenarios/{name}.json"))),
        ..Default::default()
    };
    let log = execute_run(&cfg, &inputs, None)?;
    println!("prompt: {}", log.header.prompt);
    for r in &log.records {
        let aspects: Vec<String> = r.verification.issues.iter().map(|i| format!("{:?}", i.aspect)).collect();
        print!("iteration {}: aligned={} issues=[{}]", r.index, r.verification.aligned, aspects.join(", "));
        if let Some(route) = r.route {
            print!(" route={}", route.name());
        }
        if let Some(d) = &r.diff {
            print!(" layout={} guidance={} prompt={}", d.layout_changed, d.guidance_changed, d.prompt_changed);
        }
        println!();
    }
    println!("{} chat exchanges, exit {:?}", log.exchanges.len(), log.exit);
    Ok(())
}
