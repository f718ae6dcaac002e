use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatError, ChatRequest, ChatResponse, Role, Usage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub credential: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

/// Client for OpenAI-style `POST /chat/completions` endpoints.
#[derive(Debug)]
pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
}

enum Attempt {
    Done(ChatResponse),
    Retry(String),
    Fail(ChatError),
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, ChatError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| ChatError::BackendUnavailable {
                attempts: 0,
                reason: e.to_string(),
            })?;
        Ok(Self { cfg, client })
    }

    /// Reads the bearer credential from `env_var`.
    pub fn from_env(
        endpoint: impl Into<String>,
        env_var: &str,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, ChatError> {
        let credential = match std::env::var(env_var) {
            Ok(v) if !v.trim().is_empty() => v,
            _ => {
                return Err(ChatError::MissingCredential {
                    var: env_var.to_string(),
                })
            }
        };
        Self::new(HttpConfig {
            endpoint: endpoint.into(),
            credential,
            timeout,
            retry,
        })
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                if m.attachments.is_empty() {
                    return json!({"role": role, "content": m.text});
                }
                let mut parts = vec![json!({"type": "text", "text": m.text})];
                parts.extend(m.attachments.iter().map(|a| {
                    json!({"type": "image_url", "image_url": {"url": a.data_url()}})
                }));
                json!({"role": role, "content": parts})
            })
            .collect();
        json!({
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let sent = self
            .client
            .post(&self.cfg.endpoint)
            .bearer_auth(&self.cfg.credential)
            .json(body)
            .send();
        let resp = match sent {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Attempt::Retry(e.to_string())
            }
            Err(e) => return Attempt::Fail(ChatError::Protocol(e.to_string())),
        };
        let status = resp.status().as_u16();
        match status {
            401 | 403 => return Attempt::Fail(ChatError::AuthFailure { status }),
            429 | 500..=599 => return Attempt::Retry(format!("HTTP {status}")),
            200..=299 => {}
            _ => {
                let text = resp.text().unwrap_or_default();
                return Attempt::Fail(ChatError::Protocol(format!("HTTP {status}: {text}")));
            }
        }
        let value: Value = match resp.json() {
            Ok(v) => v,
            Err(e) if e.is_timeout() => return Attempt::Retry(e.to_string()),
            Err(e) => return Attempt::Fail(ChatError::Protocol(e.to_string())),
        };
        match parse_completion(&value) {
            Ok((text, usage)) => Attempt::Done(ChatResponse {
                text,
                usage,
                latency_ms: 0,
            }),
            Err(e) => Attempt::Fail(e),
        }
    }
}

fn parse_completion(value: &Value) -> Result<(String, Option<Usage>), ChatError> {
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| ChatError::Protocol("missing choices[0].message.content".into()))?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        _ => return Err(ChatError::Protocol("content is neither text nor parts".into())),
    };
    let usage = value.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    });
    Ok((text, usage))
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        request.validate()?;
        let body = Self::request_body(request);
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(mut r) => {
                    r.latency_ms = started.elapsed().as_millis() as u64;
                    return Ok(r);
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(reason) => {
                    if attempts > self.cfg.retry.max_retries {
                        return Err(ChatError::BackendUnavailable { attempts, reason });
                    }
                    std::thread::sleep(self.cfg.retry.delay(attempts - 1));
                }
            }
        }
    }

    fn id(&self) -> String {
        format!("http:{}", self.cfg.endpoint)
    }
}
