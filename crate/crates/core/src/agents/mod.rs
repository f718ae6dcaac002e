//! The Design agent and the four Redesign agents (verification,
//! suggestion, routed correction, output structuring).

mod chat;
mod oracle;
mod parse;
mod prompts;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::ChatError;
use crate::generation::VideoArtifact;
use crate::layout::StructuredDesign;

pub use chat::{ChatAgents, ChatAgentsConfig};
pub use oracle::{oracle_route, OracleAgents, DEFAULT_BOX, MOTION_TOLERANCE};
pub use parse::{parse_route, parse_suggestion, parse_verification};
pub use prompts::{AgentRole, PromptError, RolePromptSet, Template};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("{role} reply could not be parsed: {reason}")]
    ParseFailure {
        role: &'static str,
        reason: String,
        raw: String,
    },
    #[error("no correction agent could be read from the suggestion reply")]
    RouteUnparseable { raw: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("video has no scene trace; rule-based verification needs the simulator")]
    MissingTrace,
    #[error("suggestion requested for a report without issues")]
    NoIssues,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Existence,
    Quantity,
    Attribute,
    RelationInteraction,
    MotionDirection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub aspect: Aspect,
    pub description: String,
    pub object_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub aligned: bool,
    pub issues: Vec<Issue>,
    pub raw_text: String,
}

impl VerificationReport {
    pub fn aligned(raw_text: impl Into<String>) -> Self {
        Self {
            aligned: true,
            issues: Vec::new(),
            raw_text: raw_text.into(),
        }
    }

    /// Sorted, deduplicated ids named by any issue.
    pub fn flagged_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.issues.iter().flat_map(|i| i.object_ids.clone()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.aligned && !self.issues.is_empty() {
            return Err("aligned report lists issues".into());
        }
        if let Some(i) = self.issues.iter().find(|i| i.description.trim().is_empty()) {
            return Err(format!("{:?} issue without a description", i.aspect));
        }
        Ok(())
    }
}

/// Which correction expert handles an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Consistency,
    TemporalDynamics,
    SpatialDynamics,
}

impl Route {
    /// Letter used in suggestion replies.
    pub fn label(self) -> &'static str {
        match self {
            Route::Consistency => "A",
            Route::SpatialDynamics => "B1",
            Route::TemporalDynamics => "B2",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Route::Consistency => "consistency",
            Route::TemporalDynamics => "temporal dynamics",
            Route::SpatialDynamics => "spatial dynamics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionBundle {
    pub corrections: Vec<String>,
    pub route: Route,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionDraft {
    pub raw_text: String,
}

/// Design output plus the raw reply it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutput {
    pub design: StructuredDesign,
    pub raw_text: String,
}

/// One implementation of the five agent roles. Calls within an iteration
/// happen in the order verify, suggest, correct, structure.
pub trait AgentSuite {
    fn design(&self, prompt: &str) -> Result<DesignOutput, AgentError>;

    fn verify(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        current: &StructuredDesign,
    ) -> Result<VerificationReport, AgentError>;

    fn suggest(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        report: &VerificationReport,
    ) -> Result<SuggestionBundle, AgentError>;

    fn correct(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        suggestion: &SuggestionBundle,
        previous: &StructuredDesign,
    ) -> Result<CorrectionDraft, AgentError>;

    /// `prior_scales` seeds the guidance scales of the parsed design.
    fn structure(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        draft: &CorrectionDraft,
        previous: &StructuredDesign,
        prior_scales: &BTreeMap<u32, f64>,
    ) -> Result<StructuredDesign, AgentError>;
}
