use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("point is {distance:.3} m from lane {lane}, beyond capture distance {capture:.3} m")]
    OutOfLane { lane: usize, distance: f64, capture: f64 },

    #[error("longitudinal position {s} outside lane {lane} extent [0, {length}]")]
    LaneRange { lane: usize, s: f64, length: f64 },

    #[error("initialization error: {0}")]
    Init(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unknown agent id {0}")]
    UnknownAgent(u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("stale or mismatched forward cache")]
    StaleCache,

    #[error("value iteration did not converge within {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("defender kind mismatch: {0}")]
    KindMismatch(String),

    #[error("checkpoint format version {found} not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("config hash mismatch: artifact {found}, expected {expected} (pass the override flag to load anyway)")]
    HashMismatch { found: String, expected: String },

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("trace integrity failure at step {step}: {detail}")]
    Integrity { step: usize, detail: String },

    #[error("trace schema version {found} not supported (expected {expected})")]
    TraceVersion { found: u32, expected: u32 },

    #[error("training failed at iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::CheckpointVersion { .. }
            | Error::CorruptCheckpoint(_)
            | Error::HashMismatch { .. }
            | Error::Artifact(_)
            | Error::Io { .. }
            | Error::Json(_) => 3,
            Error::Integrity { .. } | Error::TraceVersion { .. } => 4,
            Error::Training { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
