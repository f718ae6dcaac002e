//! Machine-checkable intent for a prompt and the simulator's failure model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{StructuredDesign, BETA_INIT};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {reason}")]
    Read { path: String, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
    Static,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Static => "static",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredObject {
    pub name: String,
    #[serde(default = "one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredMotion {
    pub object: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredRelation {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// An attribute that must hold in every frame the object appears in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredAttribute {
    pub object: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentSpec {
    pub objects: Vec<RequiredObject>,
    #[serde(default)]
    pub motions: Vec<RequiredMotion>,
    #[serde(default)]
    pub relations: Vec<RequiredRelation>,
    #[serde(default)]
    pub attributes: Vec<RequiredAttribute>,
}

/// Case-insensitive: does a rendered / designed object called `name` count
/// as an instance of the required object `required`?
pub fn name_matches(name: &str, required: &str) -> bool {
    name.to_lowercase().contains(&required.to_lowercase())
}

impl IntentSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.objects.is_empty() {
            return Err(ScenarioError::Invalid("intent lists no objects".into()));
        }
        for o in &self.objects {
            if o.name.trim().is_empty() || o.count == 0 {
                return Err(ScenarioError::Invalid(format!(
                    "required object {:?} needs a name and count >= 1",
                    o.name
                )));
            }
        }
        let known = |n: &str| self.objects.iter().any(|o| o.name == n);
        for m in &self.motions {
            if !known(&m.object) {
                return Err(ScenarioError::Invalid(format!(
                    "motion refers to unknown object {:?}",
                    m.object
                )));
            }
        }
        for r in &self.relations {
            if !known(&r.subject) || !known(&r.object) {
                return Err(ScenarioError::Invalid(format!(
                    "relation {:?} refers to an unknown object",
                    r.relation
                )));
            }
        }
        for a in &self.attributes {
            if !known(&a.object) {
                return Err(ScenarioError::Invalid(format!(
                    "attribute refers to unknown object {:?}",
                    a.object
                )));
            }
        }
        Ok(())
    }

    pub fn motion_of(&self, object: &str) -> Option<Direction> {
        self.motions
            .iter()
            .find(|m| m.object == object)
            .map(|m| m.direction)
    }

    /// The required object, if any, that a designed object called `name`
    /// is an instance of. Longer requirement names are tried first.
    pub fn requirement_for(&self, name: &str) -> Option<&RequiredObject> {
        let mut best: Option<&RequiredObject> = None;
        for o in &self.objects {
            if name_matches(name, &o.name) && best.is_none_or(|b| o.name.len() > b.name.len()) {
                best = Some(o);
            }
        }
        best
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let intent: Self = read_json(path)?;
        intent.validate()?;
        Ok(intent)
    }
}

/// Simulator failure model for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    #[serde(default)]
    pub name: String,
    /// Label used to group runs in reports.
    #[serde(default)]
    pub subset: String,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub intent: Option<IntentSpec>,
    /// Per object name: rendered only once its beta reaches this value.
    #[serde(default)]
    pub difficulty: BTreeMap<String, f64>,
    /// Render a duplicate instance of counted objects while beta is below
    /// `quantity_fix_beta`.
    #[serde(default)]
    pub quantity_error: bool,
    #[serde(default = "default_quantity_fix")]
    pub quantity_fix_beta: f64,
    /// Play moving objects' paths backwards while beta is below this.
    #[serde(default)]
    pub motion_flip_threshold: Option<f64>,
    /// Drop required attributes in the second half of the video while beta
    /// is below this.
    #[serde(default)]
    pub attribute_change_threshold: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_design: Option<StructuredDesign>,
}

fn default_quantity_fix() -> f64 {
    BETA_INIT + crate::layout::BETA_STEP
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            name: String::new(),
            subset: String::new(),
            prompt: String::new(),
            intent: None,
            difficulty: BTreeMap::new(),
            quantity_error: false,
            quantity_fix_beta: default_quantity_fix(),
            motion_flip_threshold: None,
            attribute_change_threshold: None,
            seed: 0,
            initial_design: None,
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let below = |v: f64| !v.is_finite() || v < BETA_INIT;
        for (name, theta) in &self.difficulty {
            if below(*theta) {
                return Err(ScenarioError::Invalid(format!(
                    "difficulty for {name:?} is {theta}, below {BETA_INIT}"
                )));
            }
        }
        for (label, v) in [
            ("quantity_fix_beta", Some(self.quantity_fix_beta)),
            ("motion_flip_threshold", self.motion_flip_threshold),
            ("attribute_change_threshold", self.attribute_change_threshold),
        ] {
            if let Some(v) = v {
                if below(v) {
                    return Err(ScenarioError::Invalid(format!("{label} {v} is below {BETA_INIT}")));
                }
            }
        }
        if let Some(intent) = &self.intent {
            intent.validate()?;
        }
        if let Some(d) = &self.initial_design {
            d.validate()
                .map_err(|e| ScenarioError::Invalid(format!("initial_design: {e}")))?;
        }
        Ok(())
    }

    /// `theta` for an object name: an exact key, otherwise the longest key
    /// the name contains, otherwise `BETA_INIT`.
    pub fn difficulty_of(&self, name: &str) -> f64 {
        if let Some(t) = self.difficulty.get(name) {
            return *t;
        }
        self.difficulty
            .iter()
            .filter(|(k, _)| name_matches(name, k))
            .max_by_key(|(k, _)| k.len())
            .map_or(BETA_INIT, |(_, t)| *t)
    }

    /// Largest beta any failure in this scenario needs.
    pub fn beta_needed(&self) -> f64 {
        let mut m = self.difficulty.values().copied().fold(BETA_INIT, f64::max);
        if self.quantity_error {
            m = m.max(self.quantity_fix_beta);
        }
        for t in [self.motion_flip_threshold, self.attribute_change_threshold]
            .into_iter()
            .flatten()
        {
            m = m.max(t);
        }
        m
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let s: Self = read_json(path)?;
        s.validate()?;
        Ok(s)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ScenarioError> {
    let err = |reason: String| ScenarioError::Read {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Failure families used by [`threshold_suite`], one per subset.
pub const SUITE_SUBSETS: [&str; 5] = ["existence", "numeracy", "motion", "attribute", "mixed"];

const SUITE_OBJECTS: [&str; 10] = [
    "ball", "dog", "bird", "boat", "kite", "horse", "robot", "lantern", "train", "fish",
];
const SUITE_ATTRIBUTES: [&str; 4] = ["red", "striped", "glowing", "wooden"];
const SUITE_DIRECTIONS: [Direction; 4] =
    [Direction::Left, Direction::Right, Direction::Up, Direction::Down];

/// `n` two-object scenarios whose hardest failure needs
/// `theta = 1.0 + 0.05 * (i % 9)` on the first object, cycling through
/// [`SUITE_SUBSETS`]. With beta raised by 0.05 per failing iteration, scenario
/// `i` first renders cleanly at iteration `i % 9 + 1`.
pub fn threshold_suite(n: usize) -> Vec<SimScenario> {
    (0..n)
        .map(|i| {
            let level = (i % 9) as u32;
            let theta = crate::layout::quantize_scale(BETA_INIT + crate::layout::BETA_STEP * f64::from(level));
            let subset = SUITE_SUBSETS[i % SUITE_SUBSETS.len()];
            let a = SUITE_OBJECTS[i % SUITE_OBJECTS.len()];
            let b = SUITE_OBJECTS[(i + 3) % SUITE_OBJECTS.len()];
            let attr = SUITE_ATTRIBUTES[i % SUITE_ATTRIBUTES.len()];
            let dir = SUITE_DIRECTIONS[i % SUITE_DIRECTIONS.len()];
            let obj = |name: &str, count: u32| RequiredObject {
                name: name.into(),
                count,
            };
            let mut intent = IntentSpec {
                objects: vec![obj(a, 1), obj(b, 1)],
                ..Default::default()
            };
            let mut s = SimScenario {
                name: format!("suite_{i:03}"),
                subset: subset.into(),
                seed: i as u64,
                ..Default::default()
            };
            let prompt = match subset {
                "existence" => {
                    s.difficulty.insert(a.into(), theta);
                    format!("A {a} next to a {b}")
                }
                "numeracy" => {
                    intent.objects[0].count = 1 + (i % 3) as u32;
                    s.quantity_error = true;
                    s.quantity_fix_beta = theta;
                    format!("{} {a} and a {b}", intent.objects[0].count)
                }
                "motion" => {
                    intent.motions.push(RequiredMotion {
                        object: a.into(),
                        direction: dir,
                    });
                    s.motion_flip_threshold = Some(theta);
                    format!("A {a} moving {} past a {b}", dir.as_str())
                }
                "attribute" => {
                    intent.attributes.push(RequiredAttribute {
                        object: a.into(),
                        value: attr.into(),
                    });
                    s.attribute_change_threshold = Some(theta);
                    format!("A {attr} {a} beside a {b}")
                }
                _ => {
                    let half = crate::layout::quantize_scale(
                        BETA_INIT + crate::layout::BETA_STEP * f64::from(level / 2),
                    );
                    s.difficulty.insert(a.into(), half);
                    intent.motions.push(RequiredMotion {
                        object: a.into(),
                        direction: dir,
                    });
                    intent.relations.push(RequiredRelation {
                        subject: a.into(),
                        relation: "passes".into(),
                        object: b.into(),
                    });
                    s.motion_flip_threshold = Some(theta);
                    format!("A {a} passes a {b} moving {}", dir.as_str())
                }
            };
            s.prompt = prompt;
            s.intent = Some(intent);
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difficulty_lookup() {
        let s = SimScenario {
            difficulty: [("car".to_string(), 1.2), ("toy car".to_string(), 1.3)].into(),
            ..Default::default()
        };
        assert_eq!(s.difficulty_of("car"), 1.2);
        assert_eq!(s.difficulty_of("toy car 2"), 1.3);
        assert_eq!(s.difficulty_of("tree"), 1.0);
        assert_eq!(s.beta_needed(), 1.3);
    }

    #[test]
    fn rejects_easy_theta() {
        let s = SimScenario {
            difficulty: [("car".to_string(), 0.9)].into(),
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
