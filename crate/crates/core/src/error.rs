use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid depth {0}: must be positive")]
    InvalidDepth(f64),

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("rotation average is degenerate: mean matrix is rank deficient (singular values {0:?})")]
    DegenerateAverage([f64; 3]),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("insufficient overlap frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("degenerate baseline of {0:e} m between overlap cameras")]
    DegenerateBaseline(f64),

    #[error("submaps share no overlap frames")]
    NoOverlap,

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("frame (t={t}, c={c}): {file} holds {got} values, manifest implies {expected}")]
    ShapeMismatch {
        t: usize,
        c: usize,
        file: String,
        expected: usize,
        got: usize,
    },

    #[error("frame (t={t}, c={c}): {file} has {got} bytes, which is not a whole number of elements")]
    ReadLength {
        t: usize,
        c: usize,
        file: String,
        got: usize,
    },

    #[error("frame (t={t}, c={c}): {reason}")]
    InvalidFrame { t: usize, c: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("submap {submap}, stage {stage}: {source}")]
    Stage {
        submap: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, submap: usize, stage: &'static str) -> Self {
        Error::Stage {
            submap,
            stage,
            source: Box::new(self),
        }
    }
}
