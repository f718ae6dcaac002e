//! Renders a design through the simulator and saves the frames as PNGs.
//!
//! cargo run --example simulate_video -- [out_dir]

use std::path::PathBuf;

use vidloop::generation::{Generator, Simulator};
use vidloop::layout::parse_design_text;
use vidloop::scenario::SimScenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("vidloop_frames"));
    let scenario = SimScenario::load(&root.join("scenarios/moon_car.json"))?;
    let sim = Simulator::new(scenario);

    for name in ["moon_car_design", "moon_car_iter1_output"] {
        let design = parse_design_text(&std::fs::read_to_string(root.join(format!("transcripts/{name}.txt")))?)?;
        let video = sim.generate(&design)?;
        println!("{name}: {} frames, hash {}", video.frame_count, &video.content_hash()[..12]);
        for f in &video.injected {
            println!("  injected: {f:?}");
        }
        let files = video.save_frames(&out.join(name))?;
        println!("  saved {} files under {}", files.len(), out.join(name).display());
    }
    Ok(())
}
