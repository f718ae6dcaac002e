use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{ChatBackend, ChatError, ChatRequest, ChatResponse};

/// Replays a fixed list of replies in order, one per call.
#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    replies: Vec<String>,
    cursor: Mutex<usize>,
}

#[derive(Deserialize)]
struct ScriptLine {
    text: String,
}

impl ScriptedBackend {
    pub fn from_replies(replies: Vec<String>) -> Self {
        Self {
            name: "scripted".into(),
            replies,
            cursor: Mutex::new(0),
        }
    }

    /// JSONL, one `{"text": ...}` object per line. Blank lines are skipped.
    pub fn parse_script(source: &str) -> Result<Self, ChatError> {
        let mut replies = Vec::new();
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine =
                serde_json::from_str(line).map_err(|e| ChatError::MalformedScript {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            replies.push(parsed.text);
        }
        Ok(Self::from_replies(replies))
    }

    pub fn load_script(path: &Path) -> Result<Self, ChatError> {
        let source = std::fs::read_to_string(path).map_err(|e| ChatError::MalformedScript {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        let mut backend = Self::parse_script(&source)?;
        backend.name = format!(
            "scripted:{}",
            path.file_name().map_or_else(
                || path.display().to_string(),
                |n| n.to_string_lossy().into_owned()
            )
        );
        Ok(backend)
    }

    pub fn call_count(&self) -> usize {
        *self.cursor.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn remaining(&self) -> usize {
        self.replies.len().saturating_sub(self.call_count())
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        request.validate()?;
        let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let Some(text) = self.replies.get(*cursor) else {
            return Err(ChatError::ScriptExhausted { served: *cursor });
        };
        *cursor += 1;
        Ok(ChatResponse {
            text: text.clone(),
            usage: None,
            latency_ms: 0,
        })
    }

    fn id(&self) -> String {
        self.name.clone()
    }
}
