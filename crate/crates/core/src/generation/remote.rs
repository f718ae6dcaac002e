use std::time::Duration;

use base64::Engine as _;
use serde_json::Value;

use super::{GenerationError, Generator, Provenance, VideoArtifact};
use crate::layout::StructuredDesign;

pub const GENERATE_PATH: &str = "/generate";
pub const HEALTH_PATH: &str = "/healthz";

/// Client for a generator service speaking the frames-over-JSON protocol:
/// `POST /generate` with the canonical design JSON, answered by
/// `{"frames": [base64 PNG, ...], "frame_count": N}`.
#[derive(Debug)]
pub struct RemoteGenerator {
    base: String,
    client: reqwest::blocking::Client,
}

fn violation(path: impl Into<String>, reason: impl Into<String>) -> GenerationError {
    GenerationError::ProtocolViolation {
        path: path.into(),
        reason: reason.into(),
    }
}

impl RemoteGenerator {
    pub fn new(base: impl Into<String>, timeout: Duration) -> Result<Self, GenerationError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GenerationError::GeneratorUnavailable(e.to_string()))?;
        Ok(Self {
            base: base.into().trim_end_matches('/').to_string(),
            client,
        })
    }

    pub fn health(&self) -> Result<(), GenerationError> {
        let resp = self
            .client
            .get(format!("{}{HEALTH_PATH}", self.base))
            .send()
            .map_err(|e| GenerationError::GeneratorUnavailable(e.to_string()))?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(GenerationError::GeneratorUnavailable(format!(
                "health check returned HTTP {}",
                resp.status().as_u16()
            )))
        }
    }

    /// Checks a `/generate` response body against the protocol and decodes
    /// its frames.
    pub fn decode_response(
        body: &Value,
        design: &StructuredDesign,
        generator: String,
    ) -> Result<VideoArtifact, GenerationError> {
        let obj = body.as_object().ok_or_else(|| violation("$", "expected an object"))?;
        let count = obj
            .get("frame_count")
            .ok_or_else(|| violation("$.frame_count", "missing"))?
            .as_u64()
            .ok_or_else(|| violation("$.frame_count", "expected a non-negative integer"))?;
        if count != u64::from(design.total_frames) {
            return Err(violation(
                "$.frame_count",
                format!("{count} frames, design has {}", design.total_frames),
            ));
        }
        let frames = obj
            .get("frames")
            .ok_or_else(|| violation("$.frames", "missing"))?
            .as_array()
            .ok_or_else(|| violation("$.frames", "expected an array"))?;
        if frames.len() as u64 != count {
            return Err(violation(
                "$.frames",
                format!("{} entries, frame_count is {count}", frames.len()),
            ));
        }
        let engine = base64::engine::general_purpose::STANDARD;
        let mut rasters = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            let path = format!("$.frames[{i}]");
            let text = f
                .as_str()
                .ok_or_else(|| violation(&path, "expected a base64 string"))?;
            let bytes = engine
                .decode(text)
                .map_err(|e| violation(&path, format!("base64: {e}")))?;
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| violation(&path, format!("png: {e}")))?
                .to_rgb8();
            if img.width() != design.canvas.width || img.height() != design.canvas.height {
                return Err(violation(
                    &path,
                    format!(
                        "{}x{} frame for a {}x{} canvas",
                        img.width(),
                        img.height(),
                        design.canvas.width,
                        design.canvas.height
                    ),
                ));
            }
            rasters.push(img);
        }
        Ok(VideoArtifact::from_rasters(
            design.canvas,
            rasters,
            Provenance {
                generator,
                design_hash: design.content_hash(),
                capabilities: obj.get("capabilities").cloned(),
            },
        ))
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, design: &StructuredDesign) -> Result<VideoArtifact, GenerationError> {
        let resp = self
            .client
            .post(format!("{}{GENERATE_PATH}", self.base))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(design.to_canonical_json())
            .send()
            .map_err(|e| GenerationError::GeneratorUnavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            400 | 422 => {
                return Err(GenerationError::DesignRejected(
                    resp.text().unwrap_or_else(|_| format!("HTTP {status}")),
                ))
            }
            500..=599 => {
                return Err(GenerationError::GeneratorUnavailable(format!("HTTP {status}")))
            }
            _ => return Err(violation("$", format!("unexpected HTTP {status}"))),
        }
        let body: Value = resp
            .json()
            .map_err(|e| violation("$", format!("not JSON: {e}")))?;
        Self::decode_response(&body, design, self.id())
    }

    fn id(&self) -> String {
        format!("remote:{}", self.base)
    }
}
