//! Crate-wide error type. Harness-specific generation errors live in
//! [`crate::harness::GenerateError`] because they carry retry semantics.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem trouble, tagged with the path that caused it.
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Structured input that could not be parsed at all.
    #[error("malformed {what}: {detail}")]
    Malformed { what: String, detail: String },

    /// Input that parsed but breaks a documented precondition.
    #[error("{0}")]
    Validation(String),

    /// A source yielded no usable samples.
    #[error("no usable samples in {0}")]
    EmptySet(String),

    /// A per-1,000-word rate was requested for text with zero countable words.
    #[error("rate undefined: zero countable words{}", match .sample_id {
        Some(id) => format!(" (sample {id})"),
        None => String::new(),
    })]
    UndefinedRate { sample_id: Option<String> },

    /// An aggregation cell (model x condition) had nothing to pool.
    #[error("no samples for model {model} under condition {condition}")]
    EmptyCell { model: String, condition: String },

    /// A resumable run ledger belongs to a different experimental plan.
    #[error("run state at {path} was written for a different plan; refusing to mix runs")]
    PlanMismatch { path: PathBuf },

    /// A live provider needs a credential that is not in the environment.
    #[error("missing credentials for provider '{provider}': set {env_var}")]
    MissingCredentials { provider: String, env_var: String },
}

impl Error {
    /// Tag an [`std::io::Error`] with the path it came from.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
