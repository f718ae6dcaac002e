//! Parses a layout transcript and prints its objects, boxes and canonical JSON.
//!
//! cargo run --example parse_transcript -- [transcript.txt]

use std::path::PathBuf;

use vidloop::layout::parse_design_text;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/transcripts/rabbit_officer_iter2_output.txt")
    });
    let design = parse_design_text(&std::fs::read_to_string(&path)?)?;
    println!("background: {}", design.background_keyword);
    println!("prompt: {}", design.prompt);
    for (id, name) in design.objects() {
        println!("object {id} ({name}), beta {}", design.scale(id));
    }
    for kf in &design.keyframes {
        let boxes: Vec<String> = kf
            .objects
            .iter()
            .map(|o| format!("{}:{:?}", o.id, <[u32; 4]>::from(o.bbox)))
            .collect();
        println!("frame {}: {}", kf.frame_index, boxes.join(" "));
    }
    println!("{}", design.to_canonical_json());
    Ok(())
}
