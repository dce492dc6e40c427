//! Crate-wide error type with an exit-status classification for the CLI.

use std::path::PathBuf;

use thiserror::Error;

/// How an error should be reported by a command-line front end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitClass {
    /// IO, endpoint, or other environmental failure (exit code 1).
    Operational,
    /// Caller misuse: bad flags, bad parameters (exit code 2).
    Usage,
    /// Input data failed validation (exit code 3).
    Validation,
}

impl ExitClass {
    pub fn code(self) -> u8 {
        match self {
            ExitClass::Operational => 1,
            ExitClass::Usage => 2,
            ExitClass::Validation => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate task id '{id}'")]
    DuplicateTaskId { id: String },

    #[error("no tasks in {path}")]
    NoTasks { path: PathBuf },

    #[error("task '{id}' has an empty instruction")]
    EmptyInstruction { id: String },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("truncated pool file {path}: header declares {declared} tasks, found {found}")]
    Truncated {
        path: PathBuf,
        declared: usize,
        found: usize,
    },

    #[error("checkpoint {path} is missing the header record")]
    MissingHeader { path: PathBuf },

    #[error("expected exactly {expected} demo instructions, got {got}")]
    DemoCount { expected: usize, got: usize },

    #[error("similarity scan needs a non-empty reference corpus")]
    EmptyCorpus,

    #[error("invalid parameter: {message}")]
    InvalidParams { message: String },

    #[error("missing environment variable {var}")]
    MissingEnv { var: String },

    #[error("endpoint returned HTTP {status}: {body_excerpt}")]
    Http { status: u16, body_excerpt: String },

    #[error("completion request failed after {attempts} attempts: {last_cause}")]
    AttemptsExhausted { attempts: u32, last_cause: String },

    #[error("endpoint error: {message}")]
    Endpoint { message: String },

    #[error("no fixture for prompt digest {digest}")]
    ScriptedMiss { digest: String },

    #[error("batch failed for prompt indices {indices:?} ({first_cause})")]
    BatchFailed {
        indices: Vec<usize>,
        first_cause: String,
    },

    #[error("task '{id}' has unknown task type; classify it before exporting")]
    UnknownTaskType { id: String },

    #[error("task '{id}' has no instances")]
    NoInstances { id: String },

    #[error("no task with id '{id}' in the pool")]
    TaskNotFound { id: String },

    #[error("instance output is empty for task '{id}'")]
    EmptyOutput { id: String },

    #[error("subsample size {requested} out of bounds [{min}, {max}]")]
    SubsampleBounds {
        requested: usize,
        min: usize,
        max: usize,
    },

    #[error("rating lists differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },

    #[error("item '{item_id}' does not carry the same model set as the first item")]
    InconsistentModelSets { item_id: String },

    #[error("template resource '{kind}' failed its digest check (manifest {expected}, file {actual})")]
    TemplateDigest {
        kind: String,
        expected: String,
        actual: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Classify for process exit status.
    pub fn exit_class(&self) -> ExitClass {
        use Error::*;
        match self {
            Io { .. } | Http { .. } | AttemptsExhausted { .. } | Endpoint { .. }
            | ScriptedMiss { .. } | BatchFailed { .. } | Csv(_) => ExitClass::Operational,
            InvalidParams { .. } | DemoCount { .. } | MissingEnv { .. } => ExitClass::Usage,
            MalformedRecord { .. }
            | DuplicateTaskId { .. }
            | NoTasks { .. }
            | EmptyInstruction { .. }
            | VersionMismatch { .. }
            | Truncated { .. }
            | MissingHeader { .. }
            | EmptyCorpus
            | UnknownTaskType { .. }
            | NoInstances { .. }
            | TaskNotFound { .. }
            | EmptyOutput { .. }
            | SubsampleBounds { .. }
            | LengthMismatch { .. }
            | InconsistentModelSets { .. }
            | TemplateDigest { .. }
            | Json(_) => ExitClass::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
