//! Writes the threshold scenario suite and a batch manifest for it.
//!
//! cargo run --example write_suite -- fixtures/scenarios/suite

use std::path::PathBuf;

use serde_json::json;
use vidloop::scenario::threshold_suite;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "suite".into()));
    std::fs::create_dir_all(&dir)?;
    let mut runs = Vec::new();
    for s in threshold_suite(50) {
        let file = format!("{}.json", s.name);
        std::fs::write(dir.join(&file), serde_json::to_string_pretty(&s)? + "\n")?;
        runs.push(json!({ "name": s.name, "scenario": file }));
    }
    let manifest = serde_json::to_string_pretty(&json!({ "runs": runs }))?;
    std::fs::write(dir.join("manifest.json"), manifest + "\n")?;
    println!("wrote {} scenarios to {}", runs.len(), dir.display());
    Ok(())
}
