use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest parse error in {path} at line {line}, column {column}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("video `{video_id}` of person `{person_id}` has no frames")]
    EmptyVideo { person_id: String, video_id: String },

    #[error("invalid manifest entry: {0}")]
    InvalidManifest(String),

    #[error("could not decode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("degenerate face box {w}x{h}")]
    DegenerateBox { w: f64, h: f64 },

    #[error("eye points coincide at ({x}, {y})")]
    CoincidentEyes { x: f64, y: f64 },

    #[error("expected a {expected}x{expected} face, got {width}x{height}")]
    FaceSize {
        expected: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid region layout: {0}")]
    Layout(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("need at least {required} samples to train {components} components, got {actual}")]
    TooFewSamples {
        components: usize,
        required: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("frame {frame} has no usable confidence")]
    MissingConfidence { frame: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot form {k} clusters from {available} signatures")]
    TooManyClusters { k: usize, available: usize },

    #[error("degenerate comparison: cohort normaliser is zero")]
    DegenerateComparison,

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("report serialisation failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
