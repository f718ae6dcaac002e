use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::parse::{parse_suggestion, parse_verification};
use super::prompts::{AgentRole, RolePromptSet};
use super::{
    AgentError, AgentSuite, CorrectionDraft, DesignOutput, Route, SuggestionBundle,
    VerificationReport,
};
use crate::chat::{Attachment, ChatBackend, ChatMessage, ChatRequest};
use crate::generation::VideoArtifact;
use crate::layout::{parse_design_text_with, Canvas, ParseContext, StructuredDesign};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatAgentsConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Frames attached to each video-conditioned call.
    pub frames_per_call: usize,
}

impl Default for ChatAgentsConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_tokens: 1024,
            frames_per_call: 6,
        }
    }
}

/// Agents backed by a chat model and role templates.
pub struct ChatAgents {
    backend: Arc<dyn ChatBackend>,
    prompts: RolePromptSet,
    cfg: ChatAgentsConfig,
    canvas: Canvas,
    total_frames: u32,
    next_request: AtomicU64,
    frame_cache: Mutex<Option<(String, Vec<Attachment>)>>,
}

impl ChatAgents {
    /// `canvas` and `total_frames` apply to designs that do not state them.
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        prompts: RolePromptSet,
        cfg: ChatAgentsConfig,
        canvas: Canvas,
        total_frames: u32,
    ) -> Self {
        Self {
            backend,
            prompts,
            cfg,
            canvas,
            total_frames,
            next_request: AtomicU64::new(1),
            frame_cache: Mutex::new(None),
        }
    }

    fn attachments(&self, video: &VideoArtifact) -> Vec<Attachment> {
        let hash = video.content_hash();
        let mut cache = self.frame_cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((h, a)) = cache.as_ref() {
            if *h == hash {
                return a.clone();
            }
        }
        let a: Vec<Attachment> = video
            .sample_png(self.cfg.frames_per_call)
            .into_iter()
            .map(Attachment::png)
            .collect();
        *cache = Some((hash, a.clone()));
        a
    }

    fn call(
        &self,
        role: AgentRole,
        values: &[(&str, &str)],
        video: Option<&VideoArtifact>,
        reminder: bool,
    ) -> Result<String, AgentError> {
        let attachments = video.map(|v| self.attachments(v)).unwrap_or_default();
        let frame_count = attachments.len().to_string();
        let mut all: Vec<(&str, &str)> = values.to_vec();
        all.push(("frame_count", &frame_count));
        let (system, mut user) = self.prompts.get(role).render(&all);
        if reminder {
            user.push_str("\n\n");
            user.push_str(&self.prompts.format_reminder);
        }
        let id = self.next_request.fetch_add(1, Ordering::SeqCst);
        let request = ChatRequest {
            model: self.cfg.model.clone(),
            messages: vec![
                ChatMessage::system(system),
                ChatMessage::user(user).with_attachments(attachments),
            ],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
            request_id: format!("req-{id:04}"),
        };
        Ok(self.backend.complete(&request)?.text)
    }

    /// Calls, parses, and on a parse error calls once more with the format
    /// reminder appended.
    fn call_parsed<T>(
        &self,
        role: AgentRole,
        values: &[(&str, &str)],
        video: Option<&VideoArtifact>,
        parse: impl Fn(&str) -> Result<T, AgentError>,
    ) -> Result<T, AgentError> {
        let first = self.call(role, values, video, false)?;
        match parse(&first) {
            Ok(v) => Ok(v),
            Err(AgentError::ParseFailure { .. } | AgentError::RouteUnparseable { .. }) => {
                let second = self.call(role, values, video, true)?;
                parse(&second)
            }
            Err(e) => Err(e),
        }
    }

    fn parse_layout(
        &self,
        role: &'static str,
        text: &str,
        ctx: &ParseContext<'_>,
    ) -> Result<StructuredDesign, AgentError> {
        parse_design_text_with(text, ctx).map_err(|e| AgentError::ParseFailure {
            role,
            reason: e.to_string(),
            raw: text.to_string(),
        })
    }
}

fn correction_role(route: Route) -> AgentRole {
    match route {
        Route::Consistency => AgentRole::CorrectionConsistency,
        Route::TemporalDynamics => AgentRole::CorrectionTemporal,
        Route::SpatialDynamics => AgentRole::CorrectionSpatial,
    }
}

impl AgentSuite for ChatAgents {
    fn design(&self, prompt: &str) -> Result<DesignOutput, AgentError> {
        let ctx = ParseContext {
            canvas: self.canvas,
            total_frames: self.total_frames,
            fallback_prompt: Some(prompt),
            ..ParseContext::default()
        };
        self.call_parsed(AgentRole::Design, &[("prompt", prompt)], None, |text| {
            let mut design = self.parse_layout("design", text, &ctx)?;
            // The design stage sets layout only; scales start at the initial value.
            design.emphasis.clear();
            Ok(DesignOutput {
                design,
                raw_text: text.to_string(),
            })
        })
    }

    fn verify(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        current: &StructuredDesign,
    ) -> Result<VerificationReport, AgentError> {
        self.call_parsed(
            AgentRole::Verification,
            &[("prompt", prompt)],
            Some(video),
            |text| parse_verification(text, current),
        )
    }

    fn suggest(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        report: &VerificationReport,
    ) -> Result<SuggestionBundle, AgentError> {
        self.call_parsed(
            AgentRole::Suggestion,
            &[("prompt", prompt), ("verification", &report.raw_text)],
            Some(video),
            parse_suggestion,
        )
    }

    fn correct(
        &self,
        video: &VideoArtifact,
        prompt: &str,
        suggestion: &SuggestionBundle,
        previous: &StructuredDesign,
    ) -> Result<CorrectionDraft, AgentError> {
        let design = previous.to_transcript();
        self.call_parsed(
            correction_role(suggestion.route),
            &[
                ("prompt", prompt),
                ("suggestion", &suggestion.raw_text),
                ("route", suggestion.route.name()),
                ("design", &design),
            ],
            Some(video),
            |text| {
                if text.trim().is_empty() {
                    return Err(AgentError::ParseFailure {
                        role: "correction",
                        reason: "empty reply".into(),
                        raw: String::new(),
                    });
                }
                Ok(CorrectionDraft {
                    raw_text: text.to_string(),
                })
            },
        )
    }

    fn structure(
        &self,
        video: &VideoArtifact,
        prompt: &str,
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
        let design = previous.to_transcript();
        self.call_parsed(
            AgentRole::OutputStructuring,
            &[
                ("prompt", prompt),
                ("correction", &draft.raw_text),
                ("design", &design),
            ],
            Some(video),
            |text| self.parse_layout("output structuring", text, &ctx),
        )
    }
}
