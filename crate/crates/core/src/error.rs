use std::path::PathBuf;

use thiserror::Error;

use crate::model::{DegradationType, Modality};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("missing parameter `{0}`")]
    MissingParam(String),

    #[error("unknown degradation type `{0}`")]
    UnknownType(String),

    #[error("unknown modality `{0}`")]
    UnknownModality(String),

    #[error("degradation `{kind}` is not applicable to {modality} images")]
    Incompatible {
        kind: DegradationType,
        modality: Modality,
    },

    #[error("invalid severity table: {0}")]
    SeverityTable(String),

    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid review decision for `{sample}`: {reason}")]
    Review { sample: String, reason: String },

    #[error("{0}")]
    Empty(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
