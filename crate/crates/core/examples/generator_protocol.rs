//! The remote generator wire format: the design JSON a service receives and
//! a response body decoded back into a video, without a running service.
//!
//! cargo run --example generator_protocol

use std::path::PathBuf;

use base64::Engine as _;
use serde_json::json;
use vidloop::generation::{encode_png, Generator, RemoteGenerator, Simulator};
use vidloop::layout::parse_design_text;
use vidloop::scenario::SimScenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let design = parse_design_text(&std::fs::read_to_string(root.join("transcripts/rabbit_officer_design.txt"))?)?;
    let request = design.to_canonical_json();
    println!("POST /generate body: {} bytes", request.len());

    let sim = Simulator::new(SimScenario::load(&root.join("scenarios/rabbit_officer.json"))?);
    let engine = base64::engine::general_purpose::STANDARD;
    let frames: Vec<String> = sim
        .generate(&design)?
        .frames()
        .iter()
        .map(|f| engine.encode(encode_png(f)))
        .collect();
    let body = json!({ "frame_count": frames.len(), "frames": frames, "capabilities": { "model": "sim" } });
    let video = RemoteGenerator::decode_response(&body, &design, "example".into())?;
    println!("decoded {} frames, hash {}", video.frame_count, &video.content_hash()[..12]);

    let mut bad = body.clone();
    bad["frames"][3] = json!("not base64!");
    match RemoteGenerator::decode_response(&bad, &design, "example".into()) {
        Err(e) => println!("corrupt frame rejected: {e}"),
        Ok(_) => println!("corrupt frame accepted"),
    }
    Ok(())
}
