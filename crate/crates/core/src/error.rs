use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero variance in {context}: correlation is undefined")]
    ZeroVariance { context: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("missing feature dump for task {task}, module {module}")]
    MissingDump { task: usize, module: usize },

    #[error("duplicate feature dump for task {task}, module {module}")]
    DuplicateDump { task: usize, module: usize },

    #[error("inconsistent probe count: expected {expected}, found {found}")]
    InconsistentProbeCount { expected: usize, found: usize },

    #[error("too many tasks: {0} (at most 10 are supported)")]
    TooManyTasks(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("latency must be positive: {0}")]
    NonPositiveLatency(String),

    #[error("no plan satisfies computational budget {budget}")]
    InfeasibleBudget { budget: f64 },

    #[error("invalid sharing plan: {0}")]
    InvalidPlan(String),

    #[error("train step called without any batch")]
    NoBatches,

    #[error("batch of {requested} requested from a dataset of {available}")]
    BatchTooLarge { requested: usize, available: usize },

    #[error("class {0} has no examples")]
    EmptyClass(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("schema mismatch in {field}: {message}")]
    SchemaMismatch { field: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SchemaMismatch {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the underlying file system rather than of the
    /// content being processed.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
