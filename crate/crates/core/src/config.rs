//! The TOML configuration file.
//!
//! ```toml
//! [loop]
//! max_iterations = 9
//! beta_step = 0.05
//!
//! [chat]
//! backend = "http"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! credential_env = "OPENAI_API_KEY"
//!
//! [generator]
//! kind = "sim"
//! scenario = "fixtures/scenarios/moon_car.json"
//! ```
//!
//! Every section and key is optional. Relative paths are resolved against
//! the directory of the file they appear in. Command-line flags override
//! file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::ChatAgentsConfig;
use crate::chat::RetryPolicy;
use crate::layout::{Canvas, DEFAULT_CANVAS, DEFAULT_TOTAL_FRAMES};
use crate::sandbox::SandboxConfig;
use crate::workflow::LoopConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
    Oracle,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Http => "http",
            BackendKind::Scripted => "scripted",
            BackendKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Sim,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub total_frames: u32,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            canvas_width: DEFAULT_CANVAS.width,
            canvas_height: DEFAULT_CANVAS.height,
            total_frames: DEFAULT_TOTAL_FRAMES,
        }
    }
}

impl LayoutConfig {
    pub fn canvas(&self) -> Canvas {
        Canvas {
            width: self.canvas_width,
            height: self.canvas_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatConfig {
    pub backend: BackendKind,
    /// Full chat-completions URL for the http backend.
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer credential.
    pub credential_env: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub frames_per_call: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// JSONL replies for the scripted backend.
    pub script: Option<PathBuf>,
    /// Directory of `<role>.txt` template overrides.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for ChatConfig {
    fn default() -> Self {
        let agents = ChatAgentsConfig::default();
        Self {
            backend: BackendKind::Oracle,
            endpoint: None,
            credential_env: "OPENAI_API_KEY".into(),
            model: agents.model,
            temperature: agents.temperature,
            max_tokens: agents.max_tokens,
            frames_per_call: agents.frames_per_call,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            script: None,
            prompts_dir: None,
        }
    }
}

impl ChatConfig {
    pub fn agents(&self) -> ChatAgentsConfig {
        ChatAgentsConfig {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            frames_per_call: self.frames_per_call,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Base URL of a remote generator service.
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    /// Simulator failure model; also supplies the intent and prompt.
    pub scenario: Option<PathBuf>,
    /// Intent for the oracle agents, overriding the scenario's.
    pub intent: Option<PathBuf>,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Sim,
            endpoint: None,
            timeout_secs: 600,
            scenario: None,
            intent: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub workers: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { workers: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[serde(rename = "loop")]
    pub run: LoopConfig,
    pub layout: LayoutConfig,
    pub chat: ChatConfig,
    pub generator: GeneratorConfig,
    pub sandbox: SandboxConfig,
    pub batch: BatchConfig,
}

/// A config problem, located by its dotted key path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid config at {key}: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::new(if key == "." { "(root)".into() } else { key }, inner.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("(file)", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.chat.script,
            &mut self.chat.prompts_dir,
            &mut self.generator.scenario,
            &mut self.generator.intent,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.run
            .validate()
            .map_err(|(k, r)| ConfigError::new(format!("loop.{k}"), r))?;
        let l = &self.layout;
        if l.canvas_width == 0 || l.canvas_height == 0 {
            return Err(ConfigError::new("layout.canvas_width", "canvas must be non-empty"));
        }
        if l.total_frames < 1 {
            return Err(ConfigError::new("layout.total_frames", "must be at least 1"));
        }
        let c = &self.chat;
        if !(c.temperature.is_finite() && c.temperature >= 0.0) {
            return Err(ConfigError::new("chat.temperature", "must be >= 0"));
        }
        if c.frames_per_call == 0 {
            return Err(ConfigError::new("chat.frames_per_call", "must be at least 1"));
        }
        if c.credential_env.trim().is_empty() {
            return Err(ConfigError::new("chat.credential_env", "must name a variable"));
        }
        self.sandbox
            .schedule
            .validate()
            .map_err(|e| ConfigError::new("sandbox.schedule", e.to_string()))?;
        if self.batch.workers == 0 {
            return Err(ConfigError::new("batch.workers", "must be at least 1"));
        }
        Ok(())
    }
}
