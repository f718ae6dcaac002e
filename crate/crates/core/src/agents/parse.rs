use std::sync::OnceLock;

use regex::Regex;

use super::{AgentError, Aspect, Issue, Route, SuggestionBundle, VerificationReport};
use crate::layout::StructuredDesign;

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static RE: OnceLock<Regex> = OnceLock::new();
            RE.get_or_init(|| Regex::new($pat).expect("valid regex"))
        }
    };
}

re!(item_re, r"^(?:[-*\u{2022}]|\d+[.)]|\(\d+\))\s+(.*)$");
re!(label_re, r"^([A-Za-z][A-Za-z /&-]{2,60}?)\s*:\s*(.*)$");
re!(summary_re, r"(?i)^(overall\b|in summary\b|summary\s*:|conclusion\b|alignment check result\b)");
re!(
    negation_re,
    r"(?i)\b(not|no|none|never|missing|absent|lacks?|lacking|instead|opposite|incorrect(?:ly)?|wrong(?:ly)?|mismatch(?:ed)?|fails?|failed|without|cannot|unclear|misaligned)\b|n't\b"
);
re!(
    affirm_strip_re,
    r"(?i)\bno (?:issues?|problems?|misalignments?|discrepanc(?:y|ies)|errors?)\b(?: (?:found|detected))?"
);
re!(
    affirm_re,
    r"(?i)\bno (?:issues?|problems?|misalignments?|discrepanc(?:y|ies))\b|\b(?:fully |well |correctly )?aligns? (?:well |fully )?with the prompt\b|\bis (?:fully )?aligned\b|\bmatches the prompt\b"
);
re!(
    motion_re,
    r"(?i)\b(motion|moving|movement|moves?|direction|trajector(?:y|ies)|left to right|right to left|left-to-right|right-to-left)\b"
);
re!(
    quantity_re,
    r"(?i)\b(quantity|quantities|number of|count|counts|how many|instances?|instead of one)\b"
);
re!(
    relation_re,
    r"(?i)\b(relationships?|relations?|interactions?|interacting|interacts?|actions?|gestures?)\b"
);
re!(
    attribute_re,
    r"(?i)\b(attributes?|colou?rs?|uniform|dressed|wearing|appearance|depicted as|badge|texture|material|shape|state)\b"
);
re!(
    existence_re,
    r"(?i)\b(existence|exists?|present|presence|missing|absent|visible|appears?)\b"
);

fn clean(line: &str) -> String {
    line.replace("**", "").replace('`', "").trim().to_string()
}

fn aspect_of(text: &str) -> Option<Aspect> {
    [
        (motion_re(), Aspect::MotionDirection),
        (quantity_re(), Aspect::Quantity),
        (relation_re(), Aspect::RelationInteraction),
        (attribute_re(), Aspect::Attribute),
        (existence_re(), Aspect::Existence),
    ]
    .into_iter()
    .find(|(re, _)| re.is_match(text))
    .map(|(_, a)| a)
}

fn is_negative(text: &str) -> bool {
    negation_re().is_match(&affirm_strip_re().replace_all(text, ""))
}

/// Object ids whose name (or the first word of it) occurs in `text`.
fn ids_mentioned(text: &str, design: &StructuredDesign) -> Vec<u32> {
    let lower = text.to_lowercase();
    let mut ids: Vec<u32> = design
        .objects()
        .into_iter()
        .filter(|(_, name)| {
            let name = name.to_lowercase();
            if lower.contains(&name) {
                return true;
            }
            name.split_whitespace()
                .next()
                .is_some_and(|w| w.len() >= 3 && lower.contains(w))
        })
        .map(|(id, _)| id)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

#[derive(Default)]
struct Item {
    label: Option<String>,
    body: String,
}

impl Item {
    fn text(&self) -> String {
        match &self.label {
            Some(l) => format!("{l}: {}", self.body),
            None => self.body.clone(),
        }
    }
}

fn start_item(rest: &str) -> Item {
    match label_re().captures(rest) {
        Some(c) if aspect_of(&c[1]).is_some() => Item {
            label: Some(c[1].trim().to_string()),
            body: c[2].trim().to_string(),
        },
        _ => Item {
            label: None,
            body: rest.trim().to_string(),
        },
    }
}

/// Verification reply to a report. Each numbered, bulleted or
/// `Aspect: finding` line is one check; a check with a negative finding is
/// an issue. "Overall" / result lines are verdicts and add no issues of
/// their own unless nothing else was listed.
pub fn parse_verification(
    text: &str,
    design: &StructuredDesign,
) -> Result<VerificationReport, AgentError> {
    let mut items: Vec<Item> = Vec::new();
    let mut open = false;
    let mut verdicts: Vec<String> = Vec::new();
    for raw in text.lines() {
        let line = clean(raw);
        if line.is_empty() {
            continue;
        }
        if summary_re().is_match(&line) {
            verdicts.push(line);
            open = false;
            continue;
        }
        if let Some(c) = item_re().captures(&line) {
            items.push(start_item(&c[1]));
            open = true;
            continue;
        }
        if let Some(c) = label_re().captures(&line) {
            if aspect_of(&c[1]).is_some() && !c[2].trim().is_empty() {
                items.push(start_item(&line));
                open = true;
                continue;
            }
        }
        if line.ends_with(':') {
            open = false;
            continue;
        }
        match items.last_mut() {
            Some(item) if open => {
                item.body.push(' ');
                item.body.push_str(&line);
            }
            _ => verdicts.push(line),
        }
    }

    let mut issues = Vec::new();
    for item in &items {
        let full = item.text();
        if item.body.is_empty() || !is_negative(&item.body) {
            continue;
        }
        let aspect = item
            .label
            .as_deref()
            .and_then(aspect_of)
            .or_else(|| aspect_of(&item.body))
            .unwrap_or(Aspect::Existence);
        issues.push(Issue {
            aspect,
            description: full.clone(),
            object_ids: ids_mentioned(&full, design),
        });
    }

    let negative_verdicts: Vec<&String> = verdicts.iter().filter(|v| is_negative(v)).collect();
    if issues.is_empty() && !negative_verdicts.is_empty() {
        let joined = negative_verdicts
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        issues.push(Issue {
            aspect: aspect_of(&joined).unwrap_or(Aspect::Existence),
            object_ids: ids_mentioned(&joined, design),
            description: joined,
        });
    }
    if !issues.is_empty() {
        return Ok(VerificationReport {
            aligned: false,
            issues,
            raw_text: text.to_string(),
        });
    }
    let affirmed = affirm_re().is_match(text) || items.iter().any(|i| !i.body.is_empty());
    if affirmed {
        Ok(VerificationReport::aligned(text))
    } else {
        Err(AgentError::ParseFailure {
            role: "verification",
            reason: "reply neither lists checks nor states alignment".into(),
            raw: text.to_string(),
        })
    }
}

re!(choice_re, r"(?i)\b(choose|chosen|select(?:ed)?|pick(?:ed)?|suitable)\b.*\bagent\b");
re!(letter_re, r"\b(B1|B2|A)\b");

fn names_in(text: &str) -> Vec<Route> {
    let lower = text.to_lowercase();
    let mut found = Vec::new();
    for (needle, route) in [
        ("consistency", Route::Consistency),
        ("temporal", Route::TemporalDynamics),
        ("spatial", Route::SpatialDynamics),
    ] {
        if lower.contains(needle) {
            found.push(route);
        }
    }
    found
}

fn letter_after_colon(line: &str) -> Option<Route> {
    let tail = line.split_once(':').map_or(line, |(_, t)| t);
    letter_re().captures(tail).map(|c| match &c[1] {
        "A" => Route::Consistency,
        "B1" => Route::SpatialDynamics,
        _ => Route::TemporalDynamics,
    })
}

/// Route from a suggestion reply: on the "choose ... agent" line a single
/// expert name wins over the letter; failing that, a single expert name
/// anywhere in the reply.
pub fn parse_route(text: &str) -> Result<Route, AgentError> {
    for raw in text.lines() {
        let line = clean(raw);
        if !choice_re().is_match(&line) {
            continue;
        }
        if let [only] = names_in(&line)[..] {
            return Ok(only);
        }
        if let Some(r) = letter_after_colon(&line) {
            return Ok(r);
        }
    }
    if let [only] = names_in(text)[..] {
        return Ok(only);
    }
    Err(AgentError::RouteUnparseable {
        raw: text.to_string(),
    })
}

re!(suggest_header_re, r"(?i)suggest(?:ed)? corrections?");

/// Bulleted directives (and any text after a "Suggest corrections ...:"
/// header) before the agent choice, plus the route.
pub fn parse_suggestion(text: &str) -> Result<SuggestionBundle, AgentError> {
    let route = parse_route(text)?;
    let mut corrections = Vec::new();
    for raw in text.lines() {
        let line = clean(raw);
        if line.is_empty() {
            continue;
        }
        if choice_re().is_match(&line) {
            break;
        }
        let body = item_re()
            .captures(&line)
            .map_or(line.clone(), |c| c[1].trim().to_string());
        if suggest_header_re().is_match(&body) {
            if let Some((_, tail)) = body.split_once(':') {
                if !tail.trim().is_empty() {
                    corrections.push(tail.trim().to_string());
                }
            }
            continue;
        }
        if item_re().is_match(&line) {
            corrections.push(body);
        }
    }
    if corrections.is_empty() {
        let before: String = text
            .lines()
            .map(clean)
            .take_while(|l| !choice_re().is_match(l))
            .filter(|l| !l.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if !before.is_empty() {
            corrections.push(before);
        }
    }
    Ok(SuggestionBundle {
        corrections,
        route,
        raw_text: text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::parse_design_text;

    fn car() -> StructuredDesign {
        parse_design_text("Frame 1: [{'id': 0, 'name': 'car', 'box': [400, 350, 100, 50]}]").unwrap()
    }

    #[test]
    fn aligned_reply() {
        let r = parse_verification("The video aligns with the prompt. No issues.", &car()).unwrap();
        assert!(r.aligned);
        assert!(r.issues.is_empty());
    }

    #[test]
    fn gibberish_is_a_parse_failure() {
        assert!(matches!(
            parse_verification("lorem ipsum", &car()),
            Err(AgentError::ParseFailure { .. })
        ));
        assert!(parse_verification("", &car()).is_err());
    }

    #[test]
    fn negative_verdict_without_items() {
        let r = parse_verification("The car does not move in the stated direction.", &car()).unwrap();
        assert!(!r.aligned);
        assert_eq!(r.issues[0].aspect, Aspect::MotionDirection);
        assert_eq!(r.issues[0].object_ids, vec![0]);
    }

    #[test]
    fn route_name_fallback_and_priority() {
        assert_eq!(
            parse_route("The temporal dynamics expert should handle this.").unwrap(),
            Route::TemporalDynamics
        );
        assert_eq!(
            parse_route("Choose the suitable correction agent: B2").unwrap(),
            Route::TemporalDynamics
        );
        // Name beats letter on the choice line.
        assert_eq!(
            parse_route("Choose the suitable correction agent: A (spatial dynamics)").unwrap(),
            Route::SpatialDynamics
        );
        assert!(parse_route("no idea").is_err());
    }
}
