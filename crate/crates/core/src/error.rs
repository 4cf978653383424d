use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// The variants mirror the failure classes the CLI maps onto exit codes:
/// configuration problems, malformed or missing data, and inputs that are
/// well-formed but statistically degenerate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("degenerate ground truth: {0}")]
    DegenerateGroundTruth(String),

    #[error("degenerate ROI: {0}")]
    DegenerateRoi(String),

    #[error("lesion placement failed after {attempts} attempts")]
    Placement { attempts: usize },

    #[error("stage produced no candidates: {0}")]
    EmptyStage(String),

    /// An error raised while running one pipeline component.
    #[error("{component}: {source}")]
    In {
        component: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: usize, actual: usize) -> Self {
        Error::Shape { expected, actual }
    }

    /// Tags the error with the component it came from.
    pub fn within(self, component: &'static str) -> Self {
        Error::In {
            component,
            source: Box::new(self),
        }
    }

    /// The error without its component tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::In { source, .. } => source.root(),
            e => e,
        }
    }

    /// Whether the error comes from statistically degenerate input rather than
    /// malformed input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self.root(),
            Error::DegenerateLabels(_)
                | Error::DegenerateGroundTruth(_)
                | Error::DegenerateRoi(_)
                | Error::EmptyStage(_)
                | Error::InsufficientData { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
