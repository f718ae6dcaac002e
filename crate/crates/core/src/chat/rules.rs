use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatError, ChatRequest, ChatResponse};

/// Replies with the first rule whose `contains` substring occurs in the
/// request's last user message (or, with `in_system`, in any message).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub contains: String,
    pub reply: String,
    #[serde(default)]
    pub in_system: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleBackend {
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub default_reply: Option<String>,
}

impl RuleBackend {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self {
            rules,
            default_reply: None,
        }
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.default_reply = Some(reply.into());
        self
    }

    /// JSON `{"rules": [{"contains", "reply"}], "default_reply"}`.
    pub fn load(path: &Path) -> Result<Self, ChatError> {
        let text = std::fs::read_to_string(path).map_err(|e| ChatError::MalformedScript {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        serde_json::from_str(&text).map_err(|e| ChatError::MalformedScript {
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

impl ChatBackend for RuleBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        request.validate()?;
        let user = request.last_user_text();
        let hit = self.rules.iter().find(|r| {
            if r.in_system {
                request.messages.iter().any(|m| m.text.contains(&r.contains))
            } else {
                user.contains(&r.contains)
            }
        });
        let text = match (hit, &self.default_reply) {
            (Some(r), _) => r.reply.clone(),
            (None, Some(d)) => d.clone(),
            (None, None) => return Err(ChatError::NoRuleMatched),
        };
        Ok(ChatResponse {
            text,
            usage: None,
            latency_ms: 0,
        })
    }

    fn id(&self) -> String {
        format!("rules:{}", self.rules.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::ChatMessage;

    #[test]
    fn first_match_wins() {
        let b = RuleBackend::new(vec![
            Rule {
                contains: "verify".into(),
                reply: "ok".into(),
                in_system: false,
            },
            Rule {
                contains: "e".into(),
                reply: "other".into(),
                in_system: false,
            },
        ]);
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::system("x"), ChatMessage::user("please verify")],
            temperature: 0.0,
            max_tokens: 1,
            request_id: "r".into(),
        };
        assert_eq!(b.complete(&req).unwrap().text, "ok");
        let mut miss = req.clone();
        miss.messages[1].text = "zzz".into();
        assert_eq!(b.complete(&miss), Err(ChatError::NoRuleMatched));
        let b = b.with_default("fallback");
        assert_eq!(b.complete(&miss).unwrap().text, "fallback");
    }
}
