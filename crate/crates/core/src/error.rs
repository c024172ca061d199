use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode or encode image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no mask found for image `{0}`")]
    MissingMask(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split assignment needs at least 3 entries, got {0}")]
    TooFewEntries(usize),
    #[error("splits already assigned in manifest `{0}`")]
    SplitsAlreadyAssigned(String),
    #[error("manifest `{0}` has entries without an assigned split")]
    SplitsUnassigned(String),
    #[error("entry `{0}` references a parent that does not exist")]
    UnknownParent(String),
    #[error("entry `{id}` has split {found} but its parent is in {expected}")]
    SplitLeak {
        id: String,
        expected: String,
        found: String,
    },
    #[error("duplicate entry id `{0}`")]
    DuplicateId(String),
    #[error("invalid manifest entry `{0}`: {1}")]
    InvalidEntry(String, String),
    #[error("mask `{0}` contains class value {1}, expected 0 or 1")]
    InvalidMask(String, u8),
    #[error("degrade target {low_w}x{low_h} does not reduce {width}x{height}")]
    InvalidDegradeTarget {
        low_w: u32,
        low_h: u32,
        width: u32,
        height: u32,
    },
    #[error("tile grid error: {0}")]
    Grid(String),
    #[error("invalid pair spec: {0}")]
    InvalidPairSpec(String),
    #[error("invalid enhancer spec: {0}")]
    InvalidEnhancerSpec(String),
    #[error("invalid scenario spec: {0}")]
    InvalidScenario(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("enhancer `{enhancer}` failed ({status}): {stderr}")]
    EnhancerFailed {
        enhancer: String,
        status: String,
        stderr: String,
    },
    #[error("enhancer `{enhancer}` timed out after {seconds} s")]
    EnhancerTimeout { enhancer: String, seconds: u64 },
    #[error("enhancer produced no output for `{0}`")]
    OutputMissing(String),
    #[error("no prediction found for `{0}`")]
    MissingPrediction(String),
    #[error("evaluation accumulated no pixels")]
    EmptyEvaluation,
    #[error("duplicate evaluation {0} -> {1}")]
    DuplicateEvaluation(String, String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Image { .. } => "ImageError",
            Error::Json { .. } => "JsonError",
            Error::MissingMask(_) => "MissingMask",
            Error::Geometry(_) => "GeometryError",
            Error::EmptyDataset => "EmptyDataset",
            Error::TooFewEntries(_) => "TooFewEntries",
            Error::SplitsAlreadyAssigned(_) => "SplitsAlreadyAssigned",
            Error::SplitsUnassigned(_) => "SplitsUnassigned",
            Error::UnknownParent(_) => "UnknownParent",
            Error::SplitLeak { .. } => "SplitLeak",
            Error::DuplicateId(_) => "DuplicateId",
            Error::InvalidEntry(..) => "InvalidEntry",
            Error::InvalidMask(..) => "InvalidMask",
            Error::InvalidDegradeTarget { .. } => "InvalidDegradeTarget",
            Error::Grid(_) => "GridError",
            Error::InvalidPairSpec(_) => "InvalidPairSpec",
            Error::InvalidEnhancerSpec(_) => "InvalidEnhancerSpec",
            Error::InvalidScenario(_) => "InvalidScenario",
            Error::InvalidValue(_) => "InvalidValue",
            Error::EnhancerFailed { .. } => "EnhancerFailed",
            Error::EnhancerTimeout { .. } => "EnhancerTimeout",
            Error::OutputMissing(_) => "OutputMissing",
            Error::MissingPrediction(_) => "MissingPrediction",
            Error::EmptyEvaluation => "EmptyEvaluation",
            Error::DuplicateEvaluation(..) => "DuplicateEvaluation",
        }
    }

    /// The dataset entry this error concerns, when there is one.
    pub fn entry_id(&self) -> Option<&str> {
        match self {
            Error::MissingMask(id)
            | Error::UnknownParent(id)
            | Error::DuplicateId(id)
            | Error::InvalidEntry(id, _)
            | Error::InvalidMask(id, _)
            | Error::OutputMissing(id)
            | Error::MissingPrediction(id) => Some(id),
            Error::SplitLeak { id, .. } => Some(id),
            _ => None,
        }
    }
}
