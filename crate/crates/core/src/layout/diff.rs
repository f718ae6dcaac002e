use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{StructuredDesign, BETA_INIT};

/// Which kinds of guidance changed between two consecutive designs.
///
/// `layout_changed` covers keyframe boxes, the object set, the background
/// keyword, canvas and frame count. `guidance_changed` covers guidance
/// scales and emphasis. `prompt_changed` compares prompts after collapsing
/// whitespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDiff {
    pub layout_changed: bool,
    pub guidance_changed: bool,
    pub prompt_changed: bool,
    pub detail: Vec<Change>,
}

impl DesignDiff {
    pub fn is_empty(&self) -> bool {
        !(self.layout_changed || self.guidance_changed || self.prompt_changed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Change {
    Added { id: u32, name: String },
    Removed { id: u32, name: String },
    Renamed { id: u32, from: String, to: String },
    BoxesChanged { id: u32 },
    KeyframesRetimed,
    ScaleChanged { id: u32, from: f64, to: f64 },
    EmphasisChanged { from: Vec<u32>, to: Vec<u32> },
    BackgroundChanged { from: String, to: String },
    CanvasChanged,
    FrameCountChanged { from: u32, to: u32 },
    PromptRewritten,
}

pub fn diff_designs(prev: &StructuredDesign, next: &StructuredDesign) -> DesignDiff {
    let mut detail = Vec::new();

    let prev_frames: Vec<u32> = prev.keyframes.iter().map(|k| k.frame_index).collect();
    let next_frames: Vec<u32> = next.keyframes.iter().map(|k| k.frame_index).collect();
    if prev_frames != next_frames {
        detail.push(Change::KeyframesRetimed);
    }

    let prev_objects: BTreeMap<u32, String> = prev.objects().into_iter().collect();
    let next_objects: BTreeMap<u32, String> = next.objects().into_iter().collect();
    for (id, name) in &prev_objects {
        match next_objects.get(id) {
            None => detail.push(Change::Removed {
                id: *id,
                name: name.clone(),
            }),
            Some(other) if other != name => detail.push(Change::Renamed {
                id: *id,
                from: name.clone(),
                to: other.clone(),
            }),
            Some(_) => {
                if boxes_of(prev, *id) != boxes_of(next, *id) {
                    detail.push(Change::BoxesChanged { id: *id });
                }
            }
        }
    }
    for (id, name) in &next_objects {
        if !prev_objects.contains_key(id) {
            detail.push(Change::Added {
                id: *id,
                name: name.clone(),
            });
        }
    }
    if prev.background_keyword != next.background_keyword {
        detail.push(Change::BackgroundChanged {
            from: prev.background_keyword.clone(),
            to: next.background_keyword.clone(),
        });
    }
    if prev.canvas != next.canvas {
        detail.push(Change::CanvasChanged);
    }
    if prev.total_frames != next.total_frames {
        detail.push(Change::FrameCountChanged {
            from: prev.total_frames,
            to: next.total_frames,
        });
    }
    let layout_changed = !detail.is_empty();

    let mark = detail.len();
    let ids: std::collections::BTreeSet<u32> = prev
        .guidance_scales
        .keys()
        .chain(next.guidance_scales.keys())
        .copied()
        .collect();
    for id in ids {
        // An object entering or leaving at the initial scale is a layout
        // change, not a guidance change.
        let from = prev.guidance_scales.get(&id).copied().unwrap_or(BETA_INIT);
        let to = next.guidance_scales.get(&id).copied().unwrap_or(BETA_INIT);
        if from != to {
            detail.push(Change::ScaleChanged { id, from, to });
        }
    }
    let (mut pe, mut ne) = (prev.emphasis.clone(), next.emphasis.clone());
    pe.sort_unstable();
    pe.dedup();
    ne.sort_unstable();
    ne.dedup();
    if pe != ne {
        detail.push(Change::EmphasisChanged {
            from: prev.emphasis.clone(),
            to: next.emphasis.clone(),
        });
    }
    let guidance_changed = detail.len() > mark;

    let prompt_changed = normalize_ws(&prev.prompt) != normalize_ws(&next.prompt);
    if prompt_changed {
        detail.push(Change::PromptRewritten);
    }

    DesignDiff {
        layout_changed,
        guidance_changed,
        prompt_changed,
        detail,
    }
}

fn boxes_of(design: &StructuredDesign, id: u32) -> Vec<(u32, Option<super::BoundingBox>)> {
    design
        .keyframes
        .iter()
        .map(|k| (k.frame_index, k.object(id).map(|o| o.bbox)))
        .collect()
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::parse_design_text;

    const ONE_CAR: &str = "Frame 1: [{'id': 0, 'name': 'car', 'box': [400, 350, 100, 50]}]\n\
                           Frame 2: [{'id': 0, 'name': 'car', 'box': [0, 350, 100, 50]}]\n\
                           New prompt: A car on the moon.";

    #[test]
    fn identical_designs() {
        let d = parse_design_text(ONE_CAR).unwrap();
        let diff = diff_designs(&d, &d);
        assert!(diff.is_empty());
        assert!(diff.detail.is_empty());
    }

    #[test]
    fn scale_only() {
        let mut a = parse_design_text(ONE_CAR).unwrap();
        a.guidance_scales.insert(0, 1.05);
        let mut b = a.clone();
        b.guidance_scales.insert(0, 1.1);
        let diff = diff_designs(&a, &b);
        assert!(diff.guidance_changed);
        assert!(!diff.layout_changed && !diff.prompt_changed);
    }

    #[test]
    fn whitespace_in_prompt_is_ignored() {
        let a = parse_design_text(ONE_CAR).unwrap();
        let mut b = a.clone();
        b.prompt = "A car  on the\tmoon.".into();
        assert!(!diff_designs(&a, &b).prompt_changed);
    }

    #[test]
    fn moved_box_and_new_object() {
        let a = parse_design_text(ONE_CAR).unwrap();
        let b = parse_design_text(
            "Frame 1: [{'id': 0, 'name': 'car', 'box': [400, 350, 100, 50]}, {'id': 1, 'name': 'rock', 'box': [10, 10, 20, 20]}]\n\
             Frame 2: [{'id': 0, 'name': 'car', 'box': [8, 350, 100, 50]}]\n\
             New prompt: A car on the moon.",
        )
        .unwrap();
        let diff = diff_designs(&a, &b);
        assert!(diff.layout_changed);
        assert!(!diff.guidance_changed);
        assert!(diff.detail.contains(&Change::BoxesChanged { id: 0 }));
        assert!(diff.detail.contains(&Change::Added {
            id: 1,
            name: "rock".into()
        }));
    }
}
