use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatError, ChatRequest, ChatResponse, Role, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub role: Role,
    pub text: String,
    /// SHA-256 of each attachment; the bytes themselves are not logged.
    pub attachments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeTiming {
    pub latency_ms: u64,
}

/// One request and its outcome, as written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request_id: String,
    pub backend: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub messages: Vec<LoggedMessage>,
    pub response: Option<String>,
    pub usage: Option<Usage>,
    pub error: Option<String>,
    pub timing: ExchangeTiming,
}

pub trait ExchangeSink: Send + Sync {
    fn record(&self, exchange: &ChatExchange) -> std::io::Result<()>;
}

/// Keeps exchanges in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    exchanges: Mutex<Vec<ChatExchange>>,
}

impl MemorySink {
    pub fn exchanges(&self) -> Vec<ChatExchange> {
        self.exchanges.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl ExchangeSink for MemorySink {
    fn record(&self, exchange: &ChatExchange) -> std::io::Result<()> {
        self.exchanges
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(exchange.clone());
        Ok(())
    }
}

/// Records every exchange in `sink` before handing the result back.
pub struct LoggedBackend<B> {
    inner: B,
    sink: Arc<dyn ExchangeSink>,
}

impl<B: ChatBackend> LoggedBackend<B> {
    pub fn new(inner: B, sink: Arc<dyn ExchangeSink>) -> Self {
        Self { inner, sink }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for LoggedBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let result = self.inner.complete(request);
        let (response, usage, error, latency_ms) = match &result {
            Ok(r) => (Some(r.text.clone()), r.usage, None, r.latency_ms),
            Err(e) => (None, None, Some(e.to_string()), 0),
        };
        let exchange = ChatExchange {
            request_id: request.request_id.clone(),
            backend: self.inner.id(),
            model: request.model.clone(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            messages: request
                .messages
                .iter()
                .map(|m| LoggedMessage {
                    role: m.role,
                    text: m.text.clone(),
                    attachments: m.attachments.iter().map(|a| a.sha256()).collect(),
                })
                .collect(),
            response,
            usage,
            error,
            timing: ExchangeTiming { latency_ms },
        };
        self.sink
            .record(&exchange)
            .map_err(|e| ChatError::LogFailure(e.to_string()))?;
        result
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}
