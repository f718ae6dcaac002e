//! Stage II: turning a structured design into frames.

mod remote;
mod render;
mod sim;

use std::io::Cursor;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::layout::{BoundingBox, Canvas, StructuredDesign};
use crate::scenario::Direction;

pub use remote::{RemoteGenerator, GENERATE_PATH, HEALTH_PATH};
pub use render::{color_for, render_frame};
pub use sim::Simulator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("design rejected: {0}")]
    DesignRejected(String),
    #[error("protocol violation at {path}: {reason}")]
    ProtocolViolation { path: String, reason: String },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

/// One object instance in one frame of the simulator's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub id: u32,
    pub name: String,
    /// 0 for the designed box, 1.. for spurious duplicates.
    pub instance: u32,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub attributes: Vec<String>,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub frame: u32,
    pub entries: Vec<TraceEntry>,
}

pub type SceneTrace = Vec<FrameTrace>;

/// A deviation from the intent that the simulator deliberately rendered.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InjectedFailure {
    /// Object not rendered because its beta is below its difficulty.
    Hidden { id: u32, name: String },
    Duplicated { id: u32, name: String },
    MotionFlipped { id: u32, name: String, direction: Direction },
    AttributeDropped { id: u32, name: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Frames {
    /// Rendered on demand from the scene trace.
    Scene { background: String },
    Raster(Vec<RgbImage>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub design_hash: String,
    /// Capability flags a remote generator reported, verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoArtifact {
    pub canvas: Canvas,
    pub frame_count: u32,
    frames: Frames,
    pub scene_trace: Option<SceneTrace>,
    pub injected: Vec<InjectedFailure>,
    pub provenance: Provenance,
}

impl VideoArtifact {
    pub fn from_rasters(
        canvas: Canvas,
        frames: Vec<RgbImage>,
        provenance: Provenance,
    ) -> Self {
        Self {
            canvas,
            frame_count: frames.len() as u32,
            frames: Frames::Raster(frames),
            scene_trace: None,
            injected: Vec::new(),
            provenance,
        }
    }

    /// Frame `index` (0-based).
    pub fn frame(&self, index: usize) -> Option<RgbImage> {
        match &self.frames {
            Frames::Raster(v) => v.get(index).cloned(),
            Frames::Scene { background } => {
                let trace = self.scene_trace.as_ref()?.get(index)?;
                Some(render_frame(&trace.entries, self.canvas, background))
            }
        }
    }

    pub fn frames(&self) -> Vec<RgbImage> {
        (0..self.frame_count as usize)
            .filter_map(|i| self.frame(i))
            .collect()
    }

    /// Up to `max` frame indices spread evenly from first to last.
    pub fn sample_indices(&self, max: usize) -> Vec<usize> {
        let n = self.frame_count as usize;
        if n == 0 || max == 0 {
            return Vec::new();
        }
        if max >= n {
            return (0..n).collect();
        }
        if max == 1 {
            return vec![0];
        }
        let mut out: Vec<usize> = (0..max)
            .map(|j| ((j * (n - 1)) as f64 / (max - 1) as f64).round() as usize)
            .collect();
        out.dedup();
        out
    }

    /// PNG encodings of the sampled frames.
    pub fn sample_png(&self, max: usize) -> Vec<Vec<u8>> {
        self.sample_indices(max)
            .into_iter()
            .filter_map(|i| self.frame(i))
            .map(|img| encode_png(&img))
            .collect()
    }

    /// SHA-256 over the render inputs (scene frames) or the pixels (rasters).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canvas.width.to_le_bytes());
        h.update(self.canvas.height.to_le_bytes());
        h.update(self.frame_count.to_le_bytes());
        match &self.frames {
            Frames::Scene { background } => {
                h.update(b"scene\0");
                h.update(background.as_bytes());
                h.update(b"\0");
                let trace = serde_json::to_vec(&self.scene_trace).expect("trace serializes");
                h.update(trace);
            }
            Frames::Raster(frames) => {
                h.update(b"raster\0");
                for f in frames {
                    h.update(f.as_raw());
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes `frame_0001.png`... into `dir`.
    pub fn save_frames(&self, dir: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.frame_count as usize);
        for i in 0..self.frame_count as usize {
            let Some(img) = self.frame(i) else { break };
            let p = dir.join(format!("frame_{:04}.png", i + 1));
            std::fs::write(&p, encode_png(&img))?;
            paths.push(p);
        }
        Ok(paths)
    }
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub trait Generator: Send + Sync {
    fn generate(&self, design: &StructuredDesign) -> Result<VideoArtifact, GenerationError>;

    fn id(&self) -> String;
}
