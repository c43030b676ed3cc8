use rea_core::analysis::AnalysisError;
use rea_core::genetics::GeneticsError;
use rea_core::profiler::ProfilerError;
use rea_core::vm::{StateError, VmError};

/// Failure of a subcommand, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("state: {0}")]
    State(String),
    #[error("input: {0}")]
    Input(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::State(_) => 3,
            CliError::Input(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn input(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {e}"))
    }

    pub fn output(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Other(format!("{context}: {e}"))
    }
}

impl From<StateError> for CliError {
    fn from(e: StateError) -> Self {
        CliError::State(e.to_string())
    }
}

impl From<VmError> for CliError {
    fn from(e: VmError) -> Self {
        match e {
            VmError::State(e) => e.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ProfilerError> for CliError {
    fn from(e: ProfilerError) -> Self {
        match e {
            ProfilerError::Vm(e) => e.into(),
            ProfilerError::State(e) => e.into(),
            ProfilerError::Csv(_) | ProfilerError::Malformed(_) => CliError::Input(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<GeneticsError> for CliError {
    fn from(e: GeneticsError) -> Self {
        match e {
            GeneticsError::InvalidConfig(_) => CliError::Config(e.to_string()),
            GeneticsError::LogCorrupt(_)
            | GeneticsError::Json(_)
            | GeneticsError::MissingThroughput(_)
            | GeneticsError::InvalidThroughput(_) => CliError::Input(e.to_string()),
            GeneticsError::Vm(e) => e.into(),
            GeneticsError::State(e) => e.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Io(_) => CliError::Other(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}
