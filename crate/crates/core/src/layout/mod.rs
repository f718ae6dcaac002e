//! Structured scene designs: keyframed per-object boxes, background keyword,
//! revised prompt and per-object guidance scales.
//!
//! A [`StructuredDesign`] is the plan handed to a generator. It has two
//! representations: the line-oriented transcript text that chat agents read
//! and write ([`parse_design_text`], [`StructuredDesign::to_transcript`]) and a
//! canonical JSON document used for persistence and the generator wire
//! protocol ([`StructuredDesign::to_canonical_json`]).

mod diff;
mod interpolate;
mod json;
mod transcript;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{diff_designs, Change, DesignDiff};
pub use interpolate::{anchor_frames, interpolate_layout};
pub use json::canonical_json;
pub use transcript::{parse_design_text, parse_design_text_with, ParseContext};

/// Initial per-object guidance scale.
pub const BETA_INIT: f64 = 1.0;
/// Increment applied to an emphasized object's guidance scale.
pub const BETA_STEP: f64 = 0.05;
pub const DEFAULT_CANVAS: Canvas = Canvas {
    width: 512,
    height: 512,
};
pub const DEFAULT_TOTAL_FRAMES: u32 = 65;

fn is_tidy(value: &str) -> bool {
    !value.contains(['\n', '\r']) && value.trim() == value
}

/// Snap a guidance scale to a 1e-9 decimal grid so that repeated increments
/// land on the same double as the decimal literal (1.0 + 2 * 0.05 == 1.1).
pub fn quantize_scale(beta: f64) -> f64 {
    (beta * 1e9).round() / 1e9
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("malformed frame line {line}: {reason}")]
    MalformedFrameLine { line: usize, reason: String },
    #[error("duplicate object id {id} in frame {frame}")]
    DuplicateId { frame: u32, id: u32 },
    #[error("box {bbox:?} of object {id} in frame {frame} is outside the {width}x{height} canvas")]
    BoxOutOfCanvas {
        frame: u32,
        id: u32,
        bbox: [i64; 4],
        width: u32,
        height: u32,
    },
    #[error("object {id} in frame {frame} has a zero-area box")]
    EmptyBox { frame: u32, id: u32 },
    #[error("object {id} in frame {frame} has an empty name")]
    EmptyName { frame: u32, id: u32 },
    #[error("frame index {frame} does not follow frame {previous}")]
    FrameOrder { frame: u32, previous: u32 },
    #[error("design has no keyframes")]
    NoKeyframes,
    #[error("total_frames {total_frames} is smaller than the keyframe count {keyframes}")]
    TooFewFrames { total_frames: u32, keyframes: usize },
    #[error("object id {id} is named both {first:?} and {second:?}")]
    NameMismatch {
        id: u32,
        first: String,
        second: String,
    },
    #[error("object id {id} has no guidance scale")]
    MissingScale { id: u32 },
    #[error("guidance scale {beta} of object {id} is below {BETA_INIT} or not finite")]
    ScaleBelowInit { id: u32, beta: f64 },
    #[error("{field} must be a single line without surrounding whitespace")]
    UnnormalizedField { field: &'static str },
    #[error("canvas must have non-zero width and height")]
    InvalidCanvas,
    #[error("frame {frame} is outside 1..={total_frames}")]
    FrameOutOfRange { frame: u32, total_frames: u32 },
    #[error("invalid design JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Default for Canvas {
    fn default() -> Self {
        DEFAULT_CANVAS
    }
}

/// Pixel-space box, `x`/`y` at the top-left corner. Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn fits(&self, canvas: Canvas) -> bool {
        self.w > 0
            && self.h > 0
            && u64::from(self.x) + u64::from(self.w) <= u64::from(canvas.width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(canvas.height)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            f64::from(self.x) + f64::from(self.w) / 2.0,
            f64::from(self.y) + f64::from(self.h) / 2.0,
        )
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

impl From<[u32; 4]> for BoundingBox {
    fn from([x, y, w, h]: [u32; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BoundingBox> for [u32; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl ObjectSpec {
    pub fn new(id: u32, name: impl Into<String>, bbox: BoundingBox) -> Self {
        Self {
            id,
            name: name.into(),
            bbox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeLayout {
    #[serde(rename = "frame")]
    pub frame_index: u32,
    pub objects: Vec<ObjectSpec>,
}

impl KeyframeLayout {
    pub fn object(&self, id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// The plan passed to a generator.
///
/// Fields are public for ergonomic construction; every constructor in this
/// crate (parsers, JSON loading, agents) calls [`StructuredDesign::validate`]
/// before handing a design out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredDesign {
    pub canvas: Canvas,
    pub total_frames: u32,
    pub keyframes: Vec<KeyframeLayout>,
    pub background_keyword: String,
    pub prompt: String,
    pub emphasis: Vec<u32>,
    pub guidance_scales: BTreeMap<u32, f64>,
}

impl StructuredDesign {
    /// Builds a design from keyframes, filling missing guidance scales with
    /// [`BETA_INIT`], and validates it.
    pub fn new(
        canvas: Canvas,
        total_frames: u32,
        keyframes: Vec<KeyframeLayout>,
        background_keyword: impl Into<String>,
        prompt: impl Into<String>,
    ) -> Result<Self, LayoutError> {
        let mut design = Self {
            canvas,
            total_frames,
            keyframes,
            background_keyword: background_keyword.into(),
            prompt: prompt.into(),
            emphasis: Vec::new(),
            guidance_scales: BTreeMap::new(),
        };
        for id in design.object_ids() {
            design.guidance_scales.insert(id, BETA_INIT);
        }
        design.validate()?;
        Ok(design)
    }

    /// Distinct object ids across all keyframes, ascending.
    pub fn object_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .keyframes
            .iter()
            .flat_map(|k| k.objects.iter().map(|o| o.id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// `(id, name)` pairs, ascending by id.
    pub fn objects(&self) -> Vec<(u32, String)> {
        let mut seen = BTreeMap::new();
        for obj in self.keyframes.iter().flat_map(|k| &k.objects) {
            seen.entry(obj.id).or_insert_with(|| obj.name.clone());
        }
        seen.into_iter().collect()
    }

    pub fn scale(&self, id: u32) -> f64 {
        self.guidance_scales.get(&id).copied().unwrap_or(BETA_INIT)
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.canvas.width == 0 || self.canvas.height == 0 {
            return Err(LayoutError::InvalidCanvas);
        }
        if self.keyframes.is_empty() {
            return Err(LayoutError::NoKeyframes);
        }
        if (self.total_frames as usize) < self.keyframes.len() {
            return Err(LayoutError::TooFewFrames {
                total_frames: self.total_frames,
                keyframes: self.keyframes.len(),
            });
        }
        for (field, value) in [
            ("prompt", &self.prompt),
            ("background_keyword", &self.background_keyword),
        ] {
            if !is_tidy(value) {
                return Err(LayoutError::UnnormalizedField { field });
            }
        }

        let mut names: BTreeMap<u32, &str> = BTreeMap::new();
        let mut previous = 0;
        for kf in &self.keyframes {
            if kf.frame_index <= previous {
                return Err(LayoutError::FrameOrder {
                    frame: kf.frame_index,
                    previous,
                });
            }
            previous = kf.frame_index;
            let mut ids_here = Vec::with_capacity(kf.objects.len());
            for obj in &kf.objects {
                let frame = kf.frame_index;
                let id = obj.id;
                if ids_here.contains(&id) {
                    return Err(LayoutError::DuplicateId { frame, id });
                }
                ids_here.push(id);
                if obj.name.trim().is_empty() {
                    return Err(LayoutError::EmptyName { frame, id });
                }
                if !is_tidy(&obj.name) {
                    return Err(LayoutError::UnnormalizedField { field: "name" });
                }
                if obj.bbox.w == 0 || obj.bbox.h == 0 {
                    return Err(LayoutError::EmptyBox { frame, id });
                }
                if !obj.bbox.fits(self.canvas) {
                    let b = obj.bbox;
                    return Err(LayoutError::BoxOutOfCanvas {
                        frame,
                        id,
                        bbox: [b.x, b.y, b.w, b.h].map(i64::from),
                        width: self.canvas.width,
                        height: self.canvas.height,
                    });
                }
                match names.get(&id) {
                    Some(first) if *first != obj.name => {
                        return Err(LayoutError::NameMismatch {
                            id,
                            first: first.to_string(),
                            second: obj.name.clone(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        names.insert(id, &obj.name);
                    }
                }
            }
        }
        for id in names.keys() {
            if !self.guidance_scales.contains_key(id) {
                return Err(LayoutError::MissingScale { id: *id });
            }
        }
        for (&id, &beta) in &self.guidance_scales {
            if !beta.is_finite() || beta < BETA_INIT {
                return Err(LayoutError::ScaleBelowInit { id, beta });
            }
        }
        Ok(())
    }

    /// Canonical JSON: sorted keys, shortest round-trip number formatting.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("design serializes to JSON");
        canonical_json(&value)
    }

    pub fn from_json(text: &str) -> Result<Self, LayoutError> {
        let design: Self =
            serde_json::from_str(text).map_err(|e| LayoutError::Json(e.to_string()))?;
        design.validate()?;
        Ok(design)
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }
}
