//! Runs the 50-scenario threshold suite as a batch, then writes the
//! corrected-ratio and correction-count tables.
//!
//! cargo run --example batch_and_analyze -- [out_dir]

use std::path::PathBuf;

use vidloop::analysis::{emit_report, load_runs};
use vidloop::config::Config;
use vidloop::workflow::{load_manifest, run_batch};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("vidloop_batch"));
    let manifest = load_manifest(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios/suite/manifest.json"))?;
    let cfg = Config::default();
    let summary = run_batch(&manifest, &cfg, Some(&out.join("runs")), 4)?;
    println!("{} runs finished", summary.outcomes.len());

    let runs = load_runs(&[out.join("runs")])?;
    let report = emit_report(&runs, &out.join("report"))?;
    print!("{}", report.ratio_csv);
    print!("{}", report.summary);
    println!("tables in {}", out.join("report").display());
    Ok(())
}
