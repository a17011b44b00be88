use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failures decoding or encoding the binary tensor container.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor format version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("truncated tensor: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after tensor payload")]
    TrailingBytes(usize),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("zero-sized dimension in shape {0:?}")]
    ZeroDim(Vec<usize>),
    #[error("shape {dims:?} implies {expected} values, got {found}")]
    ShapeMismatch {
        dims: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("dimension {0} does not fit in u32")]
    DimTooLarge(usize),
}

/// One failed dataset invariant, tied to the image that violated it when there is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub image_id: Option<String>,
    pub message: String,
}

impl ValidationIssue {
    pub fn global(message: impl Into<String>) -> Self {
        Self {
            image_id: None,
            message: message.into(),
        }
    }

    pub fn image(image_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            image_id: Some(image_id.into()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.image_id {
            Some(id) => write!(f, "image {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("tensor {path}: {source}")]
    Tensor {
        path: PathBuf,
        #[source]
        source: TensorError,
    },
    #[error("validation failed ({} issue(s)): {}", .0.len(), join_issues(.0))]
    Validation(Vec<ValidationIssue>),
    #[error("unknown image id {0:?}")]
    UnknownImage(String),
    #[error("unknown class id {0}")]
    UnknownClass(usize),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("empty vocabulary")]
    EmptyVocabulary,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no image in the dataset contains any vocabulary attribute")]
    NoAttributeEvidence,
    #[error("image {0:?} has no spatial feature maps")]
    MissingSpatial(String),
    #[error("heatmap has no activation")]
    NoActivation,
    #[error("no evaluable (image, attribute) pairs")]
    NoEvaluablePairs,
    #[error("no images with predictions")]
    NoPredictions,
    #[error("vocabulary mismatch: p.d.f. was built for {expected}, vocabulary hashes to {found}")]
    VocabularyMismatch { expected: String, found: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
