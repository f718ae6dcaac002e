use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("{file}: {reason}")]
    Read { file: String, reason: String },
    #[error("{role} template uses unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { role: &'static str, name: String },
    #[error("{role} template is missing placeholder {{{{{name}}}}}")]
    MissingPlaceholder { role: &'static str, name: &'static str },
    #[error("{role} template has no `{SPLIT}` line")]
    NoUserSection { role: &'static str },
}

const SPLIT: &str = "=== user ===";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentRole {
    Design,
    Verification,
    Suggestion,
    CorrectionConsistency,
    CorrectionTemporal,
    CorrectionSpatial,
    OutputStructuring,
}

impl AgentRole {
    pub const ALL: [AgentRole; 7] = [
        AgentRole::Design,
        AgentRole::Verification,
        AgentRole::Suggestion,
        AgentRole::CorrectionConsistency,
        AgentRole::CorrectionTemporal,
        AgentRole::CorrectionSpatial,
        AgentRole::OutputStructuring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::Design => "design",
            AgentRole::Verification => "verification",
            AgentRole::Suggestion => "suggestion",
            AgentRole::CorrectionConsistency => "correction_consistency",
            AgentRole::CorrectionTemporal => "correction_temporal",
            AgentRole::CorrectionSpatial => "correction_spatial",
            AgentRole::OutputStructuring => "output_structuring",
        }
    }

    /// Placeholders the template must contain.
    pub fn required(self) -> &'static [&'static str] {
        match self {
            AgentRole::Design | AgentRole::Verification => &["prompt"],
            AgentRole::Suggestion => &["prompt", "verification"],
            AgentRole::CorrectionConsistency
            | AgentRole::CorrectionTemporal
            | AgentRole::CorrectionSpatial => &["prompt", "suggestion", "design"],
            AgentRole::OutputStructuring => &["prompt", "correction"],
        }
    }

    fn default_source(self) -> &'static str {
        match self {
            AgentRole::Design => include_str!("../../prompts/design.txt"),
            AgentRole::Verification => include_str!("../../prompts/verification.txt"),
            AgentRole::Suggestion => include_str!("../../prompts/suggestion.txt"),
            AgentRole::CorrectionConsistency => {
                include_str!("../../prompts/correction_consistency.txt")
            }
            AgentRole::CorrectionTemporal => include_str!("../../prompts/correction_temporal.txt"),
            AgentRole::CorrectionSpatial => include_str!("../../prompts/correction_spatial.txt"),
            AgentRole::OutputStructuring => include_str!("../../prompts/output_structuring.txt"),
        }
    }
}

/// Every placeholder any template may use.
pub const PLACEHOLDERS: [&str; 7] = [
    "prompt",
    "verification",
    "suggestion",
    "route",
    "design",
    "correction",
    "frame_count",
];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([A-Za-z_]+)\s*\}\}").expect("valid regex"))
}

/// A role template: a system part and a user part, split by a line
/// `=== user ===`, with `{{name}}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    role: AgentRole,
    system: String,
    user: String,
}

impl Template {
    pub fn parse(role: AgentRole, source: &str) -> Result<Self, PromptError> {
        let Some((system, user)) = source.split_once(&format!("\n{SPLIT}\n")) else {
            return Err(PromptError::NoUserSection { role: role.name() });
        };
        let used: BTreeSet<String> = placeholder_re()
            .captures_iter(source)
            .map(|c| c[1].to_string())
            .collect();
        if let Some(bad) = used.iter().find(|u| !PLACEHOLDERS.contains(&u.as_str())) {
            return Err(PromptError::UnknownPlaceholder {
                role: role.name(),
                name: bad.clone(),
            });
        }
        if let Some(missing) = role.required().iter().find(|r| !used.contains(**r)) {
            return Err(PromptError::MissingPlaceholder {
                role: role.name(),
                name: missing,
            });
        }
        Ok(Self {
            role,
            system: system.trim().to_string(),
            user: user.trim().to_string(),
        })
    }

    pub fn role(&self) -> AgentRole {
        self.role
    }

    fn fill(text: &str, values: &[(&str, &str)]) -> String {
        placeholder_re()
            .replace_all(text, |c: &regex::Captures<'_>| {
                values
                    .iter()
                    .find(|(k, _)| *k == &c[1])
                    .map_or_else(String::new, |(_, v)| (*v).to_string())
            })
            .into_owned()
    }

    /// (system, user) with placeholders filled; absent values become "".
    pub fn render(&self, values: &[(&str, &str)]) -> (String, String) {
        (Self::fill(&self.system, values), Self::fill(&self.user, values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolePromptSet {
    templates: Vec<Template>,
    pub format_reminder: String,
}

impl RolePromptSet {
    /// Built-in templates.
    pub fn defaults() -> Self {
        let templates = AgentRole::ALL
            .iter()
            .map(|r| Template::parse(*r, r.default_source()).expect("built-in templates are valid"))
            .collect();
        Self {
            templates,
            format_reminder: include_str!("../../prompts/format_reminder.txt").trim().to_string(),
        }
    }

    /// `<role>.txt` files in `dir`; roles without a file keep the built-in
    /// template.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::defaults();
        for role in AgentRole::ALL {
            let path = dir.join(format!("{}.txt", role.name()));
            if !path.exists() {
                continue;
            }
            let source = std::fs::read_to_string(&path).map_err(|e| PromptError::Read {
                file: path.display().to_string(),
                reason: e.to_string(),
            })?;
            let t = Template::parse(role, &source)?;
            let slot = set
                .templates
                .iter_mut()
                .find(|t| t.role == role)
                .expect("all roles present");
            *slot = t;
        }
        let reminder = dir.join("format_reminder.txt");
        if reminder.exists() {
            set.format_reminder = std::fs::read_to_string(&reminder)
                .map_err(|e| PromptError::Read {
                    file: reminder.display().to_string(),
                    reason: e.to_string(),
                })?
                .trim()
                .to_string();
        }
        Ok(set)
    }

    pub fn get(&self, role: AgentRole) -> &Template {
        self.templates
            .iter()
            .find(|t| t.role == role)
            .expect("all roles present")
    }
}
