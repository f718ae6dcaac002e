//! Rule-based agents that judge a video by its scene trace instead of its
//! pixels. They make the loop testable with no model calls.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{
    AgentError, AgentSuite, Aspect, CorrectionDraft, DesignOutput, Issue, Route, SuggestionBundle,
    VerificationReport,
};
use crate::generation::{SceneTrace, TraceEntry, VideoArtifact};
use crate::layout::{
    parse_design_text_with, BoundingBox, Canvas, KeyframeLayout, ObjectSpec, ParseContext,
    StructuredDesign, DEFAULT_CANVAS, DEFAULT_TOTAL_FRAMES,
};
use crate::scenario::{Direction, IntentSpec, RequiredObject};

/// Centre displacement (px) below which a path counts as static.
pub const MOTION_TOLERANCE: f64 = 5.0;
/// Side of boxes added for missing objects.
pub const DEFAULT_BOX: u32 = 100;
const KEYFRAMES: u32 = 6;

#[derive(Debug, Clone)]
pub struct OracleAgents {
    intent: IntentSpec,
    initial: Option<StructuredDesign>,
    canvas: Canvas,
    total_frames: u32,
    background: String,
}

impl OracleAgents {
    pub fn new(intent: IntentSpec) -> Self {
        Self {
            intent,
            initial: None,
            canvas: DEFAULT_CANVAS,
            total_frames: DEFAULT_TOTAL_FRAMES,
            background: String::new(),
        }
    }

    /// Design returned by [`AgentSuite::design`] instead of one built from the intent.
    pub fn with_initial_design(mut self, design: Option<StructuredDesign>) -> Self {
        self.initial = design;
        self
    }

    pub fn with_canvas(mut self, canvas: Canvas, total_frames: u32) -> Self {
        self.canvas = canvas;
        self.total_frames = total_frames;
        self
    }

    pub fn with_background(mut self, keyword: impl Into<String>) -> Self {
        self.background = keyword.into();
        self
    }

    pub fn intent(&self) -> &IntentSpec {
        &self.intent
    }
}

/// Display names for the instances of one requirement.
fn instance_names(req: &RequiredObject) -> Vec<String> {
    if req.count == 1 {
        vec![req.name.clone()]
    } else {
        (1..=req.count).map(|k| format!("{} {k}", req.name)).collect()
    }
}

/// Keyframe boxes for a path in `direction` ending at the canvas edge,
/// starting from `start` when that leaves room to move, else from the
/// opposite edge.
fn motion_path(direction: Direction, start: BoundingBox, canvas: Canvas, n: u32) -> Vec<BoundingBox> {
    let max_x = canvas.width - start.w;
    let max_y = canvas.height - start.h;
    let (from, to) = match direction {
        Direction::Left => (if start.x > 0 { start.x } else { max_x }, 0),
        Direction::Right => (if start.x < max_x { start.x } else { 0 }, max_x),
        Direction::Up => (if start.y > 0 { start.y } else { max_y }, 0),
        Direction::Down => (if start.y < max_y { start.y } else { 0 }, max_y),
        Direction::Static => return vec![start; n as usize],
    };
    (0..n)
        .map(|j| {
            let t = if n > 1 { f64::from(j) / f64::from(n - 1) } else { 1.0 };
            let v = (f64::from(from) + (f64::from(to) - f64::from(from)) * t).round() as u32;
            match direction {
                Direction::Left | Direction::Right => BoundingBox { x: v, ..start },
                _ => BoundingBox { y: v, ..start },
            }
        })
        .collect()
}

/// Largest axis-aligned rectangle of `canvas` that meets none of `occupied`,
/// searched over the grid spanned by the canvas and box edges.
fn largest_free_region(canvas: Canvas, occupied: &[BoundingBox]) -> BoundingBox {
    let mut xs: BTreeSet<u32> = [0, canvas.width].into();
    let mut ys: BTreeSet<u32> = [0, canvas.height].into();
    for b in occupied {
        xs.extend([b.x, b.x + b.w]);
        ys.extend([b.y, b.y + b.h]);
    }
    let xs: Vec<u32> = xs.into_iter().filter(|&x| x <= canvas.width).collect();
    let ys: Vec<u32> = ys.into_iter().filter(|&y| y <= canvas.height).collect();
    let mut best = BoundingBox::new(0, 0, canvas.width, canvas.height);
    let mut best_area = 0u64;
    for (i, &x0) in xs.iter().enumerate() {
        for &x1 in &xs[i + 1..] {
            for (j, &y0) in ys.iter().enumerate() {
                for &y1 in &ys[j + 1..] {
                    let r = BoundingBox::new(x0, y0, x1 - x0, y1 - y0);
                    let area = u64::from(r.w) * u64::from(r.h);
                    if area > best_area && !occupied.iter().any(|b| b.intersects(&r)) {
                        best = r;
                        best_area = area;
                    }
                }
            }
        }
    }
    best
}

fn centered_box(region: BoundingBox, canvas: Canvas) -> BoundingBox {
    let w = DEFAULT_BOX.min(canvas.width);
    let h = DEFAULT_BOX.min(canvas.height);
    let (cx, cy) = region.center();
    let x = (cx - f64::from(w) / 2.0).round().clamp(0.0, f64::from(canvas.width - w)) as u32;
    let y = (cy - f64::from(h) / 2.0).round().clamp(0.0, f64::from(canvas.height - h)) as u32;
    BoundingBox::new(x, y, w, h)
}

struct RequirementView<'a> {
    req: &'a RequiredObject,
    entries: Vec<&'a TraceEntry>,
    ids: Vec<u32>,
}

impl OracleAgents {
    fn views<'a>(&'a self, trace: &'a SceneTrace) -> Vec<RequirementView<'a>> {
        self.intent
            .objects
            .iter()
            .map(|req| {
                let entries: Vec<&TraceEntry> = trace
                    .iter()
                    .flat_map(|f| &f.entries)
                    .filter(|e| {
                        self.intent
                            .requirement_for(&e.name)
                            .is_some_and(|r| r.name == req.name)
                    })
                    .collect();
                let mut ids: Vec<u32> = entries.iter().map(|e| e.id).collect();
                ids.sort_unstable();
                ids.dedup();
                RequirementView { req, entries, ids }
            })
            .collect()
    }

    /// Issues found in `trace`, in intent order.
    pub fn check_trace(&self, trace: &SceneTrace) -> Vec<Issue> {
        let mut issues = Vec::new();
        let views = self.views(trace);
        for v in &views {
            let name = &v.req.name;
            let present: Vec<&&TraceEntry> = v.entries.iter().filter(|e| e.present).collect();
            if present.is_empty() {
                issues.push(Issue {
                    aspect: Aspect::Existence,
                    description: format!("no {name} appears in any frame"),
                    object_ids: v.ids.clone(),
                });
                continue;
            }

            for f in trace {
                let n = f
                    .entries
                    .iter()
                    .filter(|e| {
                        e.present
                            && self
                                .intent
                                .requirement_for(&e.name)
                                .is_some_and(|r| r.name == *name)
                    })
                    .count() as u32;
                if n > 0 && n != v.req.count {
                    issues.push(Issue {
                        aspect: Aspect::Quantity,
                        description: format!(
                            "expected {} {name}, frame {} shows {n}",
                            v.req.count, f.frame
                        ),
                        object_ids: v.ids.clone(),
                    });
                    break;
                }
            }

            if let Some(direction) = self.intent.motion_of(name) {
                let mut wrong = Vec::new();
                for &id in &v.ids {
                    let centers: Vec<(f64, f64)> = present
                        .iter()
                        .filter(|e| e.id == id && e.instance == 0)
                        .map(|e| e.bbox.center())
                        .collect();
                    let (Some(a), Some(b)) = (centers.first(), centers.last()) else {
                        continue;
                    };
                    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                    let ok = match direction {
                        Direction::Left => -dx > MOTION_TOLERANCE,
                        Direction::Right => dx > MOTION_TOLERANCE,
                        Direction::Up => -dy > MOTION_TOLERANCE,
                        Direction::Down => dy > MOTION_TOLERANCE,
                        Direction::Static => {
                            dx.abs() <= MOTION_TOLERANCE && dy.abs() <= MOTION_TOLERANCE
                        }
                    };
                    if !ok {
                        wrong.push(id);
                    }
                }
                if !wrong.is_empty() {
                    issues.push(Issue {
                        aspect: Aspect::MotionDirection,
                        description: format!("{name} does not move {}", direction.as_str()),
                        object_ids: wrong,
                    });
                }
            }

            for attr in self.intent.attributes.iter().filter(|a| a.object == *name) {
                let mut lacking: Vec<u32> = present
                    .iter()
                    .filter(|e| !e.attributes.contains(&attr.value))
                    .map(|e| e.id)
                    .collect();
                lacking.sort_unstable();
                lacking.dedup();
                if !lacking.is_empty() {
                    issues.push(Issue {
                        aspect: Aspect::Attribute,
                        description: format!("{name} loses {} during the video", attr.value),
                        object_ids: lacking,
                    });
                }
            }
        }

        for rel in &self.intent.relations {
            let together = trace.iter().any(|f| {
                let has = |n: &str| {
                    f.entries.iter().any(|e| {
                        e.present
                            && self
                                .intent
                                .requirement_for(&e.name)
                                .is_some_and(|r| r.name == n)
                    })
                };
                has(&rel.subject) && has(&rel.object)
            });
            if !together {
                let mut ids: Vec<u32> = views
                    .iter()
                    .filter(|v| v.req.name == rel.subject || v.req.name == rel.object)
                    .flat_map(|v| v.ids.clone())
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                issues.push(Issue {
                    aspect: Aspect::RelationInteraction,
                    description: format!(
                        "{} never {} {} on screen",
                        rel.subject, rel.relation, rel.object
                    ),
                    object_ids: ids,
                });
            }
        }
        issues
    }

    /// Design with every intent instance in its own grid cell, movers on a
    /// full-width (or full-height) path.
    pub fn synthesize_design(&self, prompt: &str) -> Result<StructuredDesign, AgentError> {
        let canvas = self.canvas;
        let names: Vec<(String, Option<Direction>)> = self
            .intent
            .objects
            .iter()
            .flat_map(|r| {
                let d = self.intent.motion_of(&r.name);
                instance_names(r).into_iter().map(move |n| (n, d))
            })
            .collect();
        let n = names.len().max(1) as u32;
        let cols = (f64::from(n).sqrt().ceil() as u32).max(1);
        let rows = n.div_ceil(cols);
        let (cw, ch) = (canvas.width / cols, canvas.height / rows);
        let side = DEFAULT_BOX.min(cw.saturating_sub(8)).min(ch.saturating_sub(8)).max(1);

        let mut tracks: Vec<(u32, String, Vec<BoundingBox>)> = Vec::new();
        for (i, (name, direction)) in names.into_iter().enumerate() {
            let i = i as u32;
            let (c, r) = (i % cols, i / cols);
            let start = BoundingBox::new(
                c * cw + (cw - side) / 2,
                r * ch + (ch - side) / 2,
                side,
                side,
            );
            let boxes = match direction {
                Some(d) => {
                    let edge = match d {
                        Direction::Left => BoundingBox { x: canvas.width - side, ..start },
                        Direction::Right => BoundingBox { x: 0, ..start },
                        Direction::Up => BoundingBox { y: canvas.height - side, ..start },
                        Direction::Down => BoundingBox { y: 0, ..start },
                        Direction::Static => start,
                    };
                    motion_path(d, edge, canvas, KEYFRAMES)
                }
                None => vec![start; KEYFRAMES as usize],
            };
            tracks.push((i, name, boxes));
        }
        let keyframes = (0..KEYFRAMES as usize)
            .map(|k| KeyframeLayout {
                frame_index: k as u32 + 1,
                objects: tracks
                    .iter()
                    .map(|(id, name, boxes)| ObjectSpec::new(*id, name.clone(), boxes[k]))
                    .collect(),
            })
            .collect();
        StructuredDesign::new(
            canvas,
            self.total_frames,
            keyframes,
            self.background.clone(),
            prompt.split_whitespace().collect::<Vec<_>>().join(" "),
        )
        .map_err(|e| AgentError::ParseFailure {
            role: "design",
            reason: e.to_string(),
            raw: String::new(),
        })
    }

    /// Applies the layout fixes for `issues` to `previous` and sets the
    /// emphasis list. Returns `previous` unchanged (emphasis cleared) when
    /// there are no issues.
    pub fn corrected_design(
        &self,
        previous: &StructuredDesign,
        issues: &[Issue],
    ) -> StructuredDesign {
        let mut d = previous.clone();
        d.emphasis.clear();
        if issues.is_empty() {
            return d;
        }
        let mut emphasis: BTreeSet<u32> = issues.iter().flat_map(|i| i.object_ids.clone()).collect();

        let recount = issues
            .iter()
            .any(|i| matches!(i.aspect, Aspect::Existence | Aspect::Quantity));
        for req in self.intent.objects.iter().filter(|_| recount) {
            let ids: Vec<u32> = d
                .objects()
                .into_iter()
                .filter(|(_, n)| {
                    self.intent
                        .requirement_for(n)
                        .is_some_and(|r| r.name == req.name)
                })
                .map(|(id, _)| id)
                .collect();
            let want = req.count as usize;
            if ids.len() > want {
                let drop: BTreeSet<u32> = ids[want..].iter().copied().collect();
                for kf in &mut d.keyframes {
                    kf.objects.retain(|o| !drop.contains(&o.id));
                }
                for id in &drop {
                    d.guidance_scales.remove(id);
                    emphasis.remove(id);
                }
            } else if ids.len() < want {
                let taken: BTreeSet<String> = d.objects().into_iter().map(|(_, n)| n).collect();
                let fresh: Vec<String> = instance_names(req)
                    .into_iter()
                    .filter(|n| !taken.contains(n))
                    .take(want - ids.len())
                    .collect();
                for name in fresh {
                    let id = self.add_object(&mut d, &name);
                    emphasis.insert(id);
                }
            }
        }

        for issue in issues.iter().filter(|i| i.aspect == Aspect::MotionDirection) {
            for &id in &issue.object_ids {
                let Some(name) = d.objects().into_iter().find(|(i, _)| *i == id).map(|(_, n)| n)
                else {
                    continue;
                };
                let Some(direction) = self
                    .intent
                    .requirement_for(&name)
                    .and_then(|r| self.intent.motion_of(&r.name))
                else {
                    continue;
                };
                reanchor(&mut d, id, direction);
            }
        }

        let known: BTreeSet<u32> = d.object_ids().into_iter().collect();
        d.emphasis = emphasis.into_iter().filter(|id| known.contains(id)).collect();
        d
    }

    fn add_object(&self, d: &mut StructuredDesign, name: &str) -> u32 {
        let id = d.object_ids().last().map_or(0, |m| m + 1);
        let occupied: Vec<BoundingBox> = d
            .keyframes
            .iter()
            .flat_map(|k| k.objects.iter().map(|o| o.bbox))
            .collect();
        let start = centered_box(largest_free_region(d.canvas, &occupied), d.canvas);
        let n = d.keyframes.len() as u32;
        let boxes = match self
            .intent
            .requirement_for(name)
            .and_then(|r| self.intent.motion_of(&r.name))
        {
            Some(dir) => motion_path(dir, start, d.canvas, n),
            None => vec![start; n as usize],
        };
        for (kf, b) in d.keyframes.iter_mut().zip(boxes) {
            kf.objects.push(ObjectSpec::new(id, name, b));
        }
        d.guidance_scales
            .entry(id)
            .or_insert(crate::layout::BETA_INIT);
        id
    }
}

/// Rewrites the boxes of `id` to a constant-velocity path in `direction`,
/// over the keyframes it appears in.
fn reanchor(d: &mut StructuredDesign, id: u32, direction: Direction) {
    let slots: Vec<usize> = d
        .keyframes
        .iter()
        .enumerate()
        .filter(|(_, k)| k.object(id).is_some())
        .map(|(i, _)| i)
        .collect();
    let Some(&first) = slots.first() else { return };
    let start = d.keyframes[first].object(id).expect("slot has id").bbox;
    let path = motion_path(direction, start, d.canvas, slots.len() as u32);
    for (slot, b) in slots.into_iter().zip(path) {
        if let Some(o) = d.keyframes[slot].objects.iter_mut().find(|o| o.id == id) {
            o.bbox = b;
        }
    }
}

/// Spatial first, then temporal, then consistency.
pub fn oracle_route(issues: &[Issue]) -> Route {
    if issues.iter().any(|i| i.aspect == Aspect::MotionDirection) {
        Route::SpatialDynamics
    } else if issues.iter().any(|i| i.aspect == Aspect::Attribute) {
        Route::TemporalDynamics
    } else {
        Route::Consistency
    }
}

fn report_text(issues: &[Issue]) -> String {
    if issues.is_empty() {
        return "The video aligns with the prompt. No issues.".into();
    }
    let mut out = String::from("Alignment check:\n");
    for i in issues {
        let _ = writeln!(out, "- {}: {} (ids {:?})", aspect_label(i.aspect), i.description, i.object_ids);
    }
    out.push_str("Overall: not aligned.");
    out
}

fn aspect_label(a: Aspect) -> &'static str {
    match a {
        Aspect::Existence => "Object existence",
        Aspect::Quantity => "Object quantity",
        Aspect::Attribute => "Attribute binding",
        Aspect::RelationInteraction => "Relation",
        Aspect::MotionDirection => "Motion direction",
    }
}

fn directive(i: &Issue) -> String {
    let ids = &i.object_ids;
    match i.aspect {
        Aspect::Existence => format!("add the missing object and emphasize it: {}", i.description),
        Aspect::Quantity => format!("pin the box count and emphasize ids {ids:?}: {}", i.description),
        Aspect::MotionDirection => {
            format!("re-anchor the path and emphasize ids {ids:?}: {}", i.description)
        }
        Aspect::Attribute => format!("emphasize ids {ids:?}: {}", i.description),
        Aspect::RelationInteraction => format!("emphasize ids {ids:?}: {}", i.description),
    }
}

impl AgentSuite for OracleAgents {
    fn design(&self, prompt: &str) -> Result<DesignOutput, AgentError> {
        let design = match &self.initial {
            Some(d) => {
                let mut d = d.clone();
                d.emphasis.clear();
                d
            }
            None => self.synthesize_design(prompt)?,
        };
        Ok(DesignOutput {
            raw_text: design.to_transcript(),
            design,
        })
    }

    fn verify(
        &self,
        video: &VideoArtifact,
        _prompt: &str,
        _current: &StructuredDesign,
    ) -> Result<VerificationReport, AgentError> {
        let trace = video.scene_trace.as_ref().ok_or(AgentError::MissingTrace)?;
        let issues = self.check_trace(trace);
        Ok(VerificationReport {
            aligned: issues.is_empty(),
            raw_text: report_text(&issues),
            issues,
        })
    }

    fn suggest(
        &self,
        _video: &VideoArtifact,
        _prompt: &str,
        report: &VerificationReport,
    ) -> Result<SuggestionBundle, AgentError> {
        if report.issues.is_empty() {
            return Err(AgentError::NoIssues);
        }
        let route = oracle_route(&report.issues);
        let corrections: Vec<String> = report.issues.iter().map(directive).collect();
        let mut raw = String::from("Suggest corrections:\n");
        for c in &corrections {
            let _ = writeln!(raw, "- {c}");
        }
        let _ = write!(
            raw,
            "Choose the suitable correction agent: {}. (correction agent for {})",
            route.label(),
            route.name()
        );
        Ok(SuggestionBundle {
            corrections,
            route,
            raw_text: raw,
        })
    }

    fn correct(
        &self,
        video: &VideoArtifact,
        _prompt: &str,
        _suggestion: &SuggestionBundle,
        previous: &StructuredDesign,
    ) -> Result<CorrectionDraft, AgentError> {
        let trace = video.scene_trace.as_ref().ok_or(AgentError::MissingTrace)?;
        let issues = self.check_trace(trace);
        Ok(CorrectionDraft {
            raw_text: self.corrected_design(previous, &issues).to_transcript(),
        })
    }

    fn structure(
        &self,
        _video: &VideoArtifact,
        _prompt: &str,
        draft: &CorrectionDraft,
        previous: &StructuredDesign,
        prior_scales: &BTreeMap<u32, f64>,
    ) -> Result<StructuredDesign, AgentError> {
        let ctx = ParseContext {
            canvas: previous.canvas,
            total_frames: previous.total_frames,
            prior_scales: Some(prior_scales),
            fallback_prompt: Some(&previous.prompt),
            fallback_background: Some(&previous.background_keyword),
        };
        parse_design_text_with(&draft.raw_text, &ctx).map_err(|e| AgentError::ParseFailure {
            role: "output structuring",
            reason: e.to_string(),
            raw: draft.raw_text.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::FrameTrace;
    use crate::scenario::{RequiredMotion, RequiredObject};

    fn car_intent() -> IntentSpec {
        IntentSpec {
            objects: vec![RequiredObject {
                name: "car".into(),
                count: 1,
            }],
            motions: vec![RequiredMotion {
                object: "car".into(),
                direction: Direction::Left,
            }],
            ..Default::default()
        }
    }

    fn entry(id: u32, instance: u32, x: u32) -> TraceEntry {
        TraceEntry {
            id,
            name: "car".into(),
            instance,
            bbox: BoundingBox::new(x, 350, 100, 50),
            attributes: vec![],
            present: true,
        }
    }

    fn trace(xs: &[u32], dup: bool) -> SceneTrace {
        xs.iter()
            .enumerate()
            .map(|(f, &x)| {
                let mut entries = vec![entry(0, 0, x)];
                if dup {
                    entries.push(entry(0, 1, (x + 150) % 400));
                }
                FrameTrace {
                    frame: f as u32 + 1,
                    entries,
                }
            })
            .collect()
    }

    #[test]
    fn motion_sign_check() {
        let o = OracleAgents::new(car_intent());
        assert!(o.check_trace(&trace(&[400, 200, 0], false)).is_empty());
        let issues = o.check_trace(&trace(&[0, 200, 400], false));
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].aspect, Aspect::MotionDirection);
    }

    #[test]
    fn duplicate_is_a_quantity_issue() {
        let o = OracleAgents::new(car_intent());
        let issues = o.check_trace(&trace(&[400, 200, 0], true));
        assert_eq!(issues[0].aspect, Aspect::Quantity);
        assert_eq!(issues[0].object_ids, vec![0]);
    }

    #[test]
    fn free_region_avoids_boxes() {
        let canvas = Canvas { width: 100, height: 100 };
        let r = largest_free_region(canvas, &[BoundingBox::new(0, 0, 60, 100)]);
        assert_eq!(r, BoundingBox::new(60, 0, 40, 100));
    }

    #[test]
    fn routing_priority() {
        let issue = |aspect| Issue {
            aspect,
            description: "x".into(),
            object_ids: vec![],
        };
        assert_eq!(oracle_route(&[issue(Aspect::Existence)]), Route::Consistency);
        assert_eq!(
            oracle_route(&[issue(Aspect::Attribute), issue(Aspect::Quantity)]),
            Route::TemporalDynamics
        );
        assert_eq!(
            oracle_route(&[issue(Aspect::Attribute), issue(Aspect::MotionDirection)]),
            Route::SpatialDynamics
        );
    }

    #[test]
    fn synthesized_design_moves_left() {
        let o = OracleAgents::new(car_intent());
        let d = o.synthesize_design("a car").unwrap();
        let xs: Vec<u32> = d.keyframes.iter().map(|k| k.objects[0].bbox.x).collect();
        assert_eq!(xs.first(), Some(&412));
        assert_eq!(xs.last(), Some(&0));
        assert!(xs.windows(2).all(|w| w[1] < w[0]));
    }
}
