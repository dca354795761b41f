use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AsaError> = std::result::Result<T, E>;

/// Every failure the pipeline can surface.
///
/// Variants map onto CLI exit codes through [`AsaError::exit_code`]:
/// validation problems exit with 1, everything else with 2.
#[derive(Debug, Error)]
pub enum AsaError {
    #[error("manifest parse error at line {line} ({record}): {message}")]
    ManifestParse {
        line: usize,
        record: String,
        message: String,
    },
    #[error("referential integrity: {0}")]
    Referential(String),
    #[error("invalid record {record}: {message}")]
    InvalidRecord { record: String, message: String },
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("splitting error: {message}; raw backend output: {raw:?}")]
    Splitting { message: String, raw: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("embedding error: {0}")]
    Embedding(String),
    #[error("media error: {0}")]
    Media(String),
    #[error("normalizer fit error: {0}")]
    Fit(String),
    #[error("normalizer lookup error: question index {0} was not fitted")]
    Lookup(usize),
    #[error("correction error: {0}")]
    Correction(String),
    #[error("taxonomy error: label {0:?} is not in the taxonomy")]
    Taxonomy(String),
    #[error("annotation error: {0}")]
    Annotation(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error in {layer}: {message}")]
    Numeric { layer: String, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("container format error: {0}")]
    Format(String),
    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AsaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AsaError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AsaError::ManifestParse { .. }
            | AsaError::Referential(_)
            | AsaError::InvalidRecord { .. }
            | AsaError::MissingFile(_)
            | AsaError::Input(_)
            | AsaError::Config(_)
            | AsaError::Compatibility(_) => 1,
            _ => 2,
        }
    }
}
