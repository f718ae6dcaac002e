use thiserror::Error;

/// Top-level error for commands that span modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Layout(#[from] crate::layout::LayoutError),
    #[error(transparent)]
    Guidance(#[from] crate::guidance::GuidanceError),
    #[error(transparent)]
    Chat(#[from] crate::chat::ChatError),
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
    #[error(transparent)]
    Generation(#[from] crate::generation::GenerationError),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Workflow(#[from] crate::workflow::WorkflowError),
    #[error(transparent)]
    Analysis(#[from] crate::analysis::AnalysisError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Problems with inputs the user supplied, as opposed to failures while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Scenario(_) | Error::Workflow(crate::workflow::WorkflowError::ManifestInvalid(_))
        )
    }
}
