//! Chat-completion backends: an HTTP client for hosted endpoints and two
//! deterministic stand-ins (a replay script and substring rules).

mod http;
mod logged;
mod rules;
mod scripted;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig, RetryPolicy};
pub use logged::{ChatExchange, ExchangeSink, LoggedBackend, LoggedMessage, MemorySink};
pub use rules::{Rule, RuleBackend};
pub use scripted::ScriptedBackend;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChatError {
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("authentication rejected (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("script exhausted after {served} repl(ies)")]
    ScriptExhausted { served: usize },
    #[error("malformed script line {line}: {reason}")]
    MalformedScript { line: usize, reason: String },
    #[error("no rule matched and no default reply")]
    NoRuleMatched,
    #[error("missing credential: environment variable {var} is not set")]
    MissingCredential { var: String },
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
    #[error("could not record exchange: {0}")]
    LogFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// Encoded image attached to a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    pub media_type: String,
    pub data: Vec<u8>,
}

impl Attachment {
    pub fn png(data: Vec<u8>) -> Self {
        Self {
            media_type: "image/png".into(),
            data,
        }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.data))
    }

    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.media_type,
            base64::engine::general_purpose::STANDARD.encode(&self.data)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    pub attachments: Vec<Attachment>,
}

impl ChatMessage {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            attachments: Vec::new(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::new(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::new(Role::User, text)
    }

    pub fn with_attachments(mut self, attachments: Vec<Attachment>) -> Self {
        self.attachments = attachments;
        self
    }

    pub fn validate(&self) -> Result<(), ChatError> {
        if self.text.trim().is_empty() && self.attachments.is_empty() {
            return Err(ChatError::InvalidMessage(format!(
                "{:?} message has neither text nor attachments",
                self.role
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_id: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ChatError> {
        if self.messages.is_empty() {
            return Err(ChatError::InvalidMessage("empty message list".into()));
        }
        self.messages.iter().try_for_each(ChatMessage::validate)
    }

    /// Text of the last user message, or "" if there is none.
    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.text.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError>;

    /// Short identifier recorded in run logs.
    fn id(&self) -> String;
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        (**self).complete(request)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        (**self).complete(request)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}
