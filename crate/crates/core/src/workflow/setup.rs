use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use super::{RunHeader, RunLogWriter};
use crate::agents::{AgentSuite, ChatAgents, OracleAgents, RolePromptSet};
use crate::chat::{ChatBackend, ChatError, HttpBackend, LoggedBackend, ScriptedBackend};
use crate::config::{BackendKind, Config, ConfigError, GeneratorKind};
use crate::generation::{Generator, RemoteGenerator, Simulator};
use crate::scenario::{IntentSpec, SimScenario};

/// Per-run inputs. Each set field overrides the matching config key.
#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    pub name: String,
    pub subset: Option<String>,
    pub prompt: Option<String>,
    pub scenario: Option<PathBuf>,
    pub intent: Option<PathBuf>,
    pub script: Option<PathBuf>,
}

pub struct RunSetup {
    pub header: RunHeader,
    pub agents: Box<dyn AgentSuite>,
    pub generator: Box<dyn Generator>,
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> crate::Error {
    ConfigError::new(key, reason.to_string()).into()
}

/// Builds agents and generator for one run. Chat exchanges are recorded in `log`.
pub fn build_run(
    cfg: &Config,
    inputs: &RunInputs,
    log: Arc<RunLogWriter>,
) -> Result<RunSetup, crate::Error> {
    let mut cfg = cfg.clone();
    if let Some(p) = &inputs.scenario {
        cfg.generator.scenario = Some(p.clone());
    }
    if let Some(p) = &inputs.intent {
        cfg.generator.intent = Some(p.clone());
    }
    if let Some(p) = &inputs.script {
        cfg.chat.script = Some(p.clone());
    }

    let mut scenario = match &cfg.generator.scenario {
        Some(p) => SimScenario::load(p).map_err(|e| invalid("generator.scenario", e))?,
        None => SimScenario::default(),
    };
    if let Some(seed) = cfg.generator.seed {
        scenario.seed = seed;
    }
    let intent: Option<IntentSpec> = match &cfg.generator.intent {
        Some(p) => Some(IntentSpec::load(p).map_err(|e| invalid("generator.intent", e))?),
        None => scenario.intent.clone(),
    };
    let prompt = inputs
        .prompt
        .clone()
        .filter(|p| !p.trim().is_empty())
        .or_else(|| Some(scenario.prompt.clone()).filter(|p| !p.trim().is_empty()))
        .ok_or_else(|| invalid("prompt", "no prompt given and the scenario has none"))?;

    let canvas = cfg.layout.canvas();
    let total_frames = cfg.layout.total_frames;
    let agents: Box<dyn AgentSuite> = match cfg.chat.backend {
        BackendKind::Oracle => {
            let intent = intent
                .ok_or_else(|| invalid("generator.intent", "the oracle backend needs an intent"))?;
            Box::new(
                OracleAgents::new(intent)
                    .with_canvas(canvas, total_frames)
                    .with_initial_design(scenario.initial_design.clone()),
            )
        }
        kind => {
            let inner: Box<dyn ChatBackend> = match kind {
                BackendKind::Scripted => {
                    let path = cfg
                        .chat
                        .script
                        .as_ref()
                        .ok_or_else(|| invalid("chat.script", "the scripted backend needs a script"))?;
                    Box::new(ScriptedBackend::load_script(path).map_err(|e| invalid("chat.script", e))?)
                }
                _ => {
                    let endpoint = cfg
                        .chat
                        .endpoint
                        .as_ref()
                        .ok_or_else(|| invalid("chat.endpoint", "the http backend needs an endpoint"))?;
                    let backend = HttpBackend::from_env(
                        endpoint.clone(),
                        &cfg.chat.credential_env,
                        Duration::from_secs(cfg.chat.timeout_secs),
                        cfg.chat.retry.clone(),
                    )
                    .map_err(|e| match e {
                        ChatError::MissingCredential { var } => invalid(
                            "chat.credential_env",
                            format!("environment variable {var} is not set"),
                        ),
                        other => invalid("chat.endpoint", other),
                    })?;
                    Box::new(backend)
                }
            };
            let prompts = match &cfg.chat.prompts_dir {
                Some(dir) => RolePromptSet::load_dir(dir).map_err(|e| invalid("chat.prompts_dir", e))?,
                None => RolePromptSet::defaults(),
            };
            let logged: Arc<dyn ChatBackend> = Arc::new(LoggedBackend::new(inner, log));
            Box::new(ChatAgents::new(
                logged,
                prompts,
                cfg.chat.agents(),
                canvas,
                total_frames,
            ))
        }
    };

    let generator: Box<dyn Generator> = match cfg.generator.kind {
        GeneratorKind::Sim => Box::new(Simulator::new(scenario.clone())),
        GeneratorKind::Remote => {
            let endpoint = cfg
                .generator
                .endpoint
                .as_ref()
                .ok_or_else(|| invalid("generator.endpoint", "the remote generator needs an endpoint"))?;
            Box::new(
                RemoteGenerator::new(endpoint.clone(), Duration::from_secs(cfg.generator.timeout_secs))
                    .map_err(|e| invalid("generator.endpoint", e))?,
            )
        }
    };

    let header = RunHeader {
        name: if inputs.name.is_empty() {
            scenario.name.clone()
        } else {
            inputs.name.clone()
        },
        subset: inputs.subset.clone().unwrap_or_else(|| scenario.subset.clone()),
        prompt,
        backend: cfg.chat.backend.as_str().into(),
        generator: generator.id(),
        max_iterations: cfg.run.max_iterations,
        config: serde_json::to_value(&cfg).expect("config serializes"),
    };
    Ok(RunSetup {
        header,
        agents,
        generator,
    })
}
