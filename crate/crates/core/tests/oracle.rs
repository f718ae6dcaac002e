use std::collections::BTreeMap;

use proptest::prelude::*;
use vidloop::agents::{oracle_route, Aspect, Issue, OracleAgents, Route};
use vidloop::generation::{Generator, InjectedFailure, Simulator};
use vidloop::layout::StructuredDesign;
use vidloop::scenario::{
    threshold_suite, Direction, IntentSpec, RequiredAttribute, RequiredMotion, RequiredObject,
    RequiredRelation, SimScenario,
};
use vidloop::workflow::{run_pipeline, ExitStatus, LoopConfig, PipelineContext, RunHeader, RunLogWriter};

const NAMES: [&str; 4] = ["ball", "dog", "kite", "lantern"];
const DIRS: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Up, Direction::Down];

fn level(n: u32) -> f64 {
    vidloop::layout::quantize_scale(1.0 + 0.05 * f64::from(n))
}

fn scenario() -> impl Strategy<Value = SimScenario> {
    let object = (1u32..=3, prop::option::of(0usize..4), prop::option::of(0u32..4), 0u32..5);
    (
        prop::collection::vec(object, 1..=3),
        any::<bool>(),
        any::<bool>(),
        (0u32..6, prop::option::of(0u32..6), prop::option::of(0u32..6)),
        any::<u64>(),
    )
        .prop_map(|(objects, quantity_error, relation, (fix, flip, attr), seed)| {
            let mut intent = IntentSpec::default();
            let mut s = SimScenario {
                prompt: "scene".into(),
                quantity_error,
                quantity_fix_beta: level(fix),
                motion_flip_threshold: flip.map(level),
                attribute_change_threshold: attr.map(level),
                seed,
                ..Default::default()
            };
            for (i, (count, dir, attr, difficulty)) in objects.into_iter().enumerate() {
                let name = NAMES[i].to_string();
                intent.objects.push(RequiredObject {
                    name: name.clone(),
                    count,
                });
                if let Some(d) = dir {
                    intent.motions.push(RequiredMotion {
                        object: name.clone(),
                        direction: DIRS[d],
                    });
                }
                if let Some(a) = attr {
                    intent.attributes.push(RequiredAttribute {
                        object: name.clone(),
                        value: ["red", "striped", "glowing", "wooden"][a as usize].into(),
                    });
                }
                s.difficulty.insert(name, level(difficulty));
            }
            if relation && intent.objects.len() > 1 {
                intent.relations.push(RequiredRelation {
                    subject: NAMES[0].into(),
                    relation: "chases".into(),
                    object: NAMES[1].into(),
                });
            }
            s.intent = Some(intent);
            s
        })
}

/// Issues a layout-satisfying design must produce, derived from the
/// simulator's injected failures alone.
fn expected_issues(intent: &IntentSpec, design: &StructuredDesign, injected: &[InjectedFailure]) -> Vec<(Aspect, Vec<u32>)> {
    let hidden = |id: u32| injected.iter().any(|f| matches!(f, InjectedFailure::Hidden { id: i, .. } if *i == id));
    let dup = |id: u32| injected.iter().any(|f| matches!(f, InjectedFailure::Duplicated { id: i, .. } if *i == id));
    let flipped = |id: u32| injected.iter().any(|f| matches!(f, InjectedFailure::MotionFlipped { id: i, .. } if *i == id));
    let dropped = |id: u32, v: &str| {
        injected.iter().any(|f| matches!(f, InjectedFailure::AttributeDropped { id: i, value, .. } if *i == id && value == v))
    };
    let ids_of = |req: &str| -> Vec<u32> {
        design
            .objects()
            .into_iter()
            .filter(|(_, n)| intent.requirement_for(n).is_some_and(|r| r.name == req))
            .map(|(id, _)| id)
            .collect()
    };
    let mut out = Vec::new();
    for r in &intent.objects {
        let ids = ids_of(&r.name);
        let visible: Vec<u32> = ids.iter().copied().filter(|&i| !hidden(i)).collect();
        if visible.is_empty() {
            out.push((Aspect::Existence, ids));
            continue;
        }
        let shown = visible.len() + visible.iter().filter(|&&i| dup(i)).count();
        if shown as u32 != r.count {
            out.push((Aspect::Quantity, ids.clone()));
        }
        if intent.motion_of(&r.name).is_some() {
            let wrong: Vec<u32> = visible.iter().copied().filter(|&i| flipped(i)).collect();
            if !wrong.is_empty() {
                out.push((Aspect::MotionDirection, wrong));
            }
        }
        for a in intent.attributes.iter().filter(|a| a.object == r.name) {
            let lacking: Vec<u32> = visible.iter().copied().filter(|&i| dropped(i, &a.value)).collect();
            if !lacking.is_empty() {
                out.push((Aspect::Attribute, lacking));
            }
        }
    }
    for rel in &intent.relations {
        let seen = |n: &str| ids_of(n).into_iter().any(|i| !hidden(i));
        if !(seen(&rel.subject) && seen(&rel.object)) {
            let mut ids = ids_of(&rel.subject);
            ids.extend(ids_of(&rel.object));
            ids.sort_unstable();
            ids.dedup();
            out.push((Aspect::RelationInteraction, ids));
        }
    }
    out
}

fn run(s: &SimScenario, max_iterations: u32) -> vidloop::workflow::RunLog {
    let agents = OracleAgents::new(s.intent.clone().unwrap()).with_initial_design(s.initial_design.clone());
    let writer = RunLogWriter::in_memory();
    let cfg = LoopConfig {
        max_iterations,
        ..Default::default()
    };
    let ctx = PipelineContext {
        cfg: &cfg,
        log: &writer,
        run_dir: None,
    };
    let header = RunHeader {
        name: s.name.clone(),
        subset: s.subset.clone(),
        prompt: s.prompt.clone(),
        backend: "oracle".into(),
        generator: "sim".into(),
        max_iterations,
        config: serde_json::Value::Null,
    };
    run_pipeline(header, &agents, &Simulator::new(s.clone()), &ctx)
}

fn bound(s: &SimScenario) -> u32 {
    ((s.beta_needed() - 1.0) / 0.05 - 1e-9).ceil() as u32 + 1
}

proptest! {
    #[test]
    fn verification_reports_exactly_the_injected_failures(
        s in scenario(),
        betas in prop::collection::vec(0u32..7, 9),
    ) {
        let intent = s.intent.clone().unwrap();
        let agents = OracleAgents::new(intent.clone());
        let mut design = agents.synthesize_design(&s.prompt).unwrap();
        for (id, b) in design.object_ids().into_iter().zip(betas) {
            design.guidance_scales.insert(id, level(b));
        }
        let video = Simulator::new(s).generate(&design).unwrap();
        let issues: Vec<(Aspect, Vec<u32>)> = agents
            .check_trace(video.scene_trace.as_ref().unwrap())
            .into_iter()
            .map(|i| (i.aspect, i.object_ids))
            .collect();
        prop_assert_eq!(issues, expected_issues(&intent, &design, &video.injected));
    }

    #[test]
    fn random_scenarios_converge_within_the_threshold_bound(s in scenario()) {
        let n = bound(&s);
        let log = run(&s, 9);
        prop_assert_eq!(log.exit.clone(), Some(ExitStatus::Aligned), "{:?}", log.records.last().map(|r| &r.verification));
        prop_assert!(log.records.len() as u32 <= n, "{} records, bound {n}", log.records.len());
    }
}

#[test]
fn suite_scenarios_align_exactly_at_their_level() {
    for (i, s) in threshold_suite(50).iter().enumerate() {
        let log = run(s, 9);
        assert_eq!(log.exit, Some(ExitStatus::Aligned), "{}", s.name);
        assert_eq!(log.records.len(), i % 9 + 1, "{}", s.name);
        assert!(log.records.len() as u32 <= bound(s));
    }
}

#[test]
fn fixture_scenarios_converge() {
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios");
    for name in ["moon_car", "rabbit_officer"] {
        let s = SimScenario::load(&dir.join(format!("{name}.json"))).unwrap();
        let log = run(&s, 9);
        assert_eq!(log.exit, Some(ExitStatus::Aligned), "{name}");
        assert!(log.records.len() as u32 <= bound(&s), "{name}");
    }
}

#[test]
fn routing_prefers_motion_then_attributes() {
    let issue = |aspect| Issue {
        aspect,
        description: "x".into(),
        object_ids: vec![0],
    };
    assert_eq!(oracle_route(&[issue(Aspect::Quantity), issue(Aspect::MotionDirection)]), Route::SpatialDynamics);
    assert_eq!(oracle_route(&[issue(Aspect::Attribute), issue(Aspect::Existence)]), Route::TemporalDynamics);
    assert_eq!(oracle_route(&[issue(Aspect::Existence)]), Route::Consistency);
}

#[test]
fn missing_instances_are_added_and_emphasized() {
    let s = SimScenario::load(
        &std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios/rabbit_officer.json"),
    )
    .unwrap();
    let log = run(&s, 9);
    let first = &log.records[0];
    let next = first.design.as_ref().unwrap();
    let names: BTreeMap<u32, String> = next.objects().into_iter().collect();
    assert_eq!(names.len(), 3);
    assert!(first.emphasized.contains(&1) && first.emphasized.contains(&2));
    let initial = log.initial_design.as_ref().unwrap();
    for kf in &next.keyframes {
        for o in &kf.objects {
            assert!(o.bbox.fits(initial.canvas));
        }
    }
}
