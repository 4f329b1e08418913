use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = KljnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KljnError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty trace")]
    EmptyTrace,

    /// Every sample fell below the current floor, so no Ohm's-law estimate exists.
    #[error("no usable samples: all {omitted} samples below the current floor")]
    NoUsableSamples { omitted: usize },

    #[error("parallel inversion is singular: r_p = {r_p} ohm >= r_b = {r_b} ohm")]
    SingularInversion { r_p: f64, r_b: f64 },

    /// No candidate noise explains the wire. Either the wire is not ideal or the
    /// candidate noises came from the wrong seeds.
    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("BEP {index}: {source}")]
    Bep {
        index: usize,
        #[source]
        source: Box<KljnError>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: line {line}: {source}", path.display())]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl KljnError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        KljnError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KljnError::Io {
            path: path.into(),
            source,
        }
    }
}
