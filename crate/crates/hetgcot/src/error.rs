use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Validation,
    Training,
    Transport,
    Parse,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Validation => 1,
            FailureKind::Training => 2,
            FailureKind::Transport => 3,
            FailureKind::Parse => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: FailureKind,
    pub stage: String,
    pub source: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for CliError {}

pub trait StageExt<T> {
    fn stage(self, kind: FailureKind, stage: &str) -> Result<T, CliError>;

    fn invalid(self, stage: &str) -> Result<T, CliError>
    where
        Self: Sized,
    {
        self.stage(FailureKind::Validation, stage)
    }
}

impl<T, E: Into<anyhow::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, kind: FailureKind, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            kind,
            stage: stage.to_string(),
            source: e.into(),
        })
    }
}
