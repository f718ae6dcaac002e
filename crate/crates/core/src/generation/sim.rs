use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    FrameTrace, Frames, GenerationError, Generator, InjectedFailure, Provenance, TraceEntry,
    VideoArtifact,
};
use crate::layout::{interpolate_layout, BoundingBox, StructuredDesign};
use crate::scenario::{Direction, SimScenario};

/// Tolerance for comparing a designed beta against a threshold.
const BETA_EPS: f64 = 1e-9;
/// Displacement (px) below which a path counts as static.
pub(crate) const STATIC_TOLERANCE: f64 = 5.0;

/// Deterministic stand-in for a video model: renders each object at its
/// interpolated box unless the scenario's failure model says otherwise.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: SimScenario,
}

struct ObjectPlan {
    id: u32,
    name: String,
    visible: bool,
    duplicated: bool,
    flipped: bool,
    attributes: Vec<String>,
    drop_attributes: bool,
    dup_offset: u32,
}

impl Simulator {
    pub fn new(scenario: SimScenario) -> Self {
        Self { scenario }
    }

    pub fn scenario(&self) -> &SimScenario {
        &self.scenario
    }

    fn plan(&self, design: &StructuredDesign) -> Vec<ObjectPlan> {
        let s = &self.scenario;
        let intent = s.intent.as_ref();
        design
            .objects()
            .into_iter()
            .map(|(id, name)| {
                let beta = design.scale(id);
                let below = |t: f64| beta + BETA_EPS < t;
                let visible = !below(s.difficulty_of(&name));
                let req = intent.and_then(|i| i.requirement_for(&name));
                let direction = req.and_then(|r| intent?.motion_of(&r.name));
                let moves = direction.is_some_and(|d| d != Direction::Static)
                    && path_displacement(design, id, direction.unwrap()).abs() > STATIC_TOLERANCE;
                let attributes: Vec<String> = match (req, intent) {
                    (Some(r), Some(i)) => i
                        .attributes
                        .iter()
                        .filter(|a| a.object == r.name)
                        .map(|a| a.value.clone())
                        .collect(),
                    _ => Vec::new(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ (u64::from(id) << 32));
                ObjectPlan {
                    id,
                    visible,
                    duplicated: visible && s.quantity_error && req.is_some() && below(s.quantity_fix_beta),
                    flipped: visible && moves && s.motion_flip_threshold.is_some_and(below),
                    drop_attributes: visible
                        && !attributes.is_empty()
                        && s.attribute_change_threshold.is_some_and(below),
                    attributes,
                    dup_offset: rng.random_range(20..=60),
                    name,
                }
            })
            .collect()
    }
}

/// Signed centre displacement of `id` from its first to its last keyframe,
/// along the axis of `direction` (positive = towards `direction`).
fn path_displacement(design: &StructuredDesign, id: u32, direction: Direction) -> f64 {
    let centers: Vec<(f64, f64)> = design
        .keyframes
        .iter()
        .filter_map(|k| k.object(id).map(|o| o.bbox.center()))
        .collect();
    let (Some(first), Some(last)) = (centers.first(), centers.last()) else {
        return 0.0;
    };
    let (dx, dy) = (last.0 - first.0, last.1 - first.1);
    match direction {
        Direction::Left => -dx,
        Direction::Right => dx,
        Direction::Up => -dy,
        Direction::Down => dy,
        Direction::Static => dx.abs().max(dy.abs()),
    }
}

fn duplicate_box(b: BoundingBox, offset: u32, design: &StructuredDesign) -> BoundingBox {
    let shift = b.w + offset;
    let x = if b.x + b.w + shift <= design.canvas.width {
        b.x + shift
    } else {
        b.x.saturating_sub(shift)
    };
    let w = b.w.min(design.canvas.width - x);
    BoundingBox { x, w, ..b }
}

impl Generator for Simulator {
    fn generate(&self, design: &StructuredDesign) -> Result<VideoArtifact, GenerationError> {
        design
            .validate()
            .map_err(|e| GenerationError::InvalidDesign(e.to_string()))?;
        let plans = self.plan(design);
        let total = design.total_frames;
        let half = total / 2;
        let mut trace = Vec::with_capacity(total as usize);
        for f in 1..=total {
            let forward = interpolate_layout(design, f)
                .map_err(|e| GenerationError::InvalidDesign(e.to_string()))?;
            let backward = interpolate_layout(design, total + 1 - f)
                .map_err(|e| GenerationError::InvalidDesign(e.to_string()))?;
            let mut entries = Vec::new();
            for p in &plans {
                let source = if p.flipped { &backward } else { &forward };
                let Some(obj) = source.iter().find(|o| o.id == p.id) else {
                    continue;
                };
                let attributes = if p.drop_attributes && f > half {
                    Vec::new()
                } else {
                    p.attributes.clone()
                };
                entries.push(TraceEntry {
                    id: p.id,
                    name: p.name.clone(),
                    instance: 0,
                    bbox: obj.bbox,
                    attributes: attributes.clone(),
                    present: p.visible,
                });
                if p.duplicated {
                    entries.push(TraceEntry {
                        id: p.id,
                        name: p.name.clone(),
                        instance: 1,
                        bbox: duplicate_box(obj.bbox, p.dup_offset, design),
                        attributes,
                        present: true,
                    });
                }
            }
            trace.push(FrameTrace { frame: f, entries });
        }

        let mut injected = Vec::new();
        let intent = self.scenario.intent.as_ref();
        for p in &plans {
            let (id, name) = (p.id, p.name.clone());
            if !p.visible {
                injected.push(InjectedFailure::Hidden { id, name: name.clone() });
            }
            if p.duplicated {
                injected.push(InjectedFailure::Duplicated { id, name: name.clone() });
            }
            if p.flipped {
                let direction = intent
                    .and_then(|i| i.requirement_for(&name).and_then(|r| i.motion_of(&r.name)))
                    .expect("flipped objects have a required motion");
                injected.push(InjectedFailure::MotionFlipped {
                    id,
                    name: name.clone(),
                    direction,
                });
            }
            if p.drop_attributes {
                for value in &p.attributes {
                    injected.push(InjectedFailure::AttributeDropped {
                        id,
                        name: name.clone(),
                        value: value.clone(),
                    });
                }
            }
        }

        Ok(VideoArtifact {
            canvas: design.canvas,
            frame_count: total,
            frames: Frames::Scene {
                background: design.background_keyword.clone(),
            },
            scene_trace: Some(trace),
            injected,
            provenance: Provenance {
                generator: self.id(),
                design_hash: design.content_hash(),
                capabilities: None,
            },
        })
    }

    fn id(&self) -> String {
        if self.scenario.name.is_empty() {
            "sim".into()
        } else {
            format!("sim:{}", self.scenario.name)
        }
    }
}
