//! Experiment driver behind the `mirt` binary: configuration resolution,
//! pipeline orchestration, and deterministic artifact emission.

pub mod config;
pub mod experiments;
pub mod output;

/// Process exit codes of the `mirt` binary.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Error carried out of the experiment pipelines, tagged with the failing
/// stage and the exit-code class.
#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

impl CliError {
    pub fn config(stage: &str, message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, stage: stage.to_string(), message: message.into() }
    }

    pub fn io(stage: &str, message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Io, stage: stage.to_string(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Numerical => EXIT_NUMERICAL,
            ErrorKind::Io => EXIT_IO,
        }
    }

    /// Wrap a core error, classifying it into an exit-code class.
    pub fn from_core(stage: &str, err: mirt_core::Error) -> Self {
        use mirt_core::Error as E;
        let kind = match &err {
            E::InvalidArgument(_) | E::DimensionMismatch { .. } => ErrorKind::Config,
            E::Io(_) | E::Json(_) => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        };
        CliError { kind, stage: stage.to_string(), message: err.to_string() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// `.stage("...")` adapter for core results.
pub trait StageExt<T> {
    fn stage(self, name: &str) -> CliResult<T>;
}

impl<T> StageExt<T> for mirt_core::Result<T> {
    fn stage(self, name: &str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(name, e))
    }
}
