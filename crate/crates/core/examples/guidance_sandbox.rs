//! Descent trials and gradient checks on the toy attention model, with CSV output.
//!
//! cargo run --example guidance_sandbox -- [out_dir]

use std::path::PathBuf;

use vidloop::sandbox::{run_sandbox, run_trial, trial, SandboxConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("vidloop_sandbox"));
    let cfg = SandboxConfig::default();

    let t = trial(&cfg, 0)?;
    let traj = run_trial(&cfg, &t)?;
    println!("seed 0 energies:");
    for (latent, e) in traj.latents.iter().zip(traj.energies()) {
        println!("  t={:>2}  {e:.6}", latent.timestep);
    }

    let report = run_sandbox(&cfg, Some(&out))?;
    println!(
        "{}/{} trials non-increasing; {}/{} gradient checks pass (worst {:.2e})",
        report.non_increasing,
        report.trials,
        report.gradient_passed,
        report.gradient_instances,
        report.worst_rel_error
    );
    println!("tables in {}", out.display());
    Ok(())
}
