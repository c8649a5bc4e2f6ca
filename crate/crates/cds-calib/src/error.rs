//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: need at least {required} steps, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A gradient update or forecast produced NaN/inf. Adaptation catches this
    /// and falls back to the base forecast; it only escapes to callers that
    /// invoke the low-level ops directly.
    #[error("non-finite values produced during {0}")]
    NonFiniteUpdate(&'static str),

    #[error("malformed data in {path} ({locus}): {reason}")]
    Format {
        path: String,
        locus: String,
        reason: String,
    },

    #[error("no latent record for anchor {anchor}")]
    AnchorNotCovered { anchor: i64 },

    #[error("empty hyperparameter grid: {0}")]
    EmptyGrid(&'static str),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Tag an error with the pipeline stage it surfaced in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
