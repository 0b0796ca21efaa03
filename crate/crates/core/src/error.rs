use thiserror::Error;

/// Errors surfaced by the simulation, analysis and integration layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vertex {vertex} out of range for n = {n}")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("rule `{rule}` expects {expected} offered vertices, got {got}")]
    Arity {
        rule: String,
        expected: usize,
        got: usize,
    },

    #[error("rule `{rule}` is not supported by {what}: {reason}")]
    Unsupported {
        rule: String,
        what: &'static str,
        reason: String,
    },

    #[error("could not allocate forest for n = {0}")]
    Allocation(usize),

    #[error("integration unstable at t = {t}: {detail}")]
    Instability { t: f64, detail: String },

    #[error("{0}")]
    Inconclusive(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::VertexOutOfRange { .. } => "vertex_out_of_range",
            Error::Arity { .. } => "arity",
            Error::Unsupported { .. } => "unsupported",
            Error::Allocation(_) => "allocation",
            Error::Instability { .. } => "instability",
            Error::Inconclusive(_) => "inconclusive",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True for errors caused by the caller's input rather than by a failure
    /// during execution.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::VertexOutOfRange { .. }
                | Error::Arity { .. }
                | Error::Unsupported { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
