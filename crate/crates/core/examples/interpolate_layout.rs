//! Per-frame boxes between keyframe anchors for the moving-car design.
//!
//! cargo run --example interpolate_layout -- [every]

use std::path::PathBuf;

use vidloop::layout::{anchor_frames, interpolate_layout, parse_design_text};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let every: u32 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/transcripts/moon_car_design.txt");
    let design = parse_design_text(&std::fs::read_to_string(path)?)?;
    let anchors = anchor_frames(design.keyframes.len(), design.total_frames);
    println!("anchors: {anchors:?}");
    for frame in (1..=design.total_frames).filter(|f| (f - 1) % every == 0 || anchors.contains(f)) {
        let objs = interpolate_layout(&design, frame)?;
        let row: Vec<String> = objs
            .iter()
            .map(|o| format!("{} {:?}", o.name, <[u32; 4]>::from(o.bbox)))
            .collect();
        let mark = if anchors.contains(&frame) { "*" } else { " " };
        println!("{mark}{frame:>3}  {}", row.join(", "));
    }
    Ok(())
}
