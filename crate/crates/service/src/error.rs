use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use strata_core::audio::AudioError;
use strata_core::features::FeatureError;
use strata_core::mixer::MixError;
use strata_core::placement::PlacementError;
use strata_core::sonify::SonifyError;
use strata_core::viz::VizError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("project {0} not found")]
    ProjectNotFound(String),
    #[error("base track is {got:.2} s; allowed range is {min} s to {max} s")]
    DurationOutOfRange { got: f64, min: f64, max: f64 },
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Sonify(#[from] SonifyError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Viz(#[from] VizError),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt project file: {0}")]
    Corrupt(String),
}

/// Wire form of an error: `{code, message, details}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::ProjectNotFound(_) => "ProjectNotFound",
            Self::DurationOutOfRange { .. } => "DurationOutOfRange",
            Self::BadRequest(_) => "BadRequest",
            Self::Audio(AudioError::MalformedWav(_)) => "MalformedWav",
            Self::Audio(AudioError::UnsupportedEncoding(_)) => "UnsupportedEncoding",
            Self::Audio(AudioError::EmptyInterval { .. }) => "EmptyInterval",
            Self::Audio(AudioError::RateOutOfRange(_)) => "RateOutOfRange",
            Self::Feature(FeatureError::TooShort { .. }) => "TooShort",
            Self::Feature(FeatureError::NotCanonicalRate(_)) => "NotCanonicalRate",
            Self::Sonify(e) => match e {
                SonifyError::BadImage(_) => "BadImage",
                SonifyError::BackendUnavailable(_) => "BackendUnavailable",
                SonifyError::BadGeneratedAudio(_) => "BadGeneratedAudio",
                SonifyError::EmptyText => "EmptyText",
                SonifyError::DurationOutOfRange(_) => "DurationOutOfRange",
                SonifyError::Audio(AudioError::MalformedWav(_)) => "MalformedWav",
                SonifyError::Audio(_) => "UnsupportedEncoding",
            },
            Self::Placement(e) => match e {
                PlacementError::Feature(_) => "TooShort",
                PlacementError::LengthMismatch(..) => "LengthMismatch",
                PlacementError::NoCandidate { .. } => "NoCandidate",
                PlacementError::ClipTooLong { .. } => "ClipTooLong",
                PlacementError::InvalidHint(..) => "InvalidHint",
            },
            Self::Mix(e) => match e {
                MixError::InvalidManifest(_) => "InvalidManifest",
                MixError::UnknownElement(_) => "UnknownElement",
                MixError::InvalidPlacement(_) => "InvalidPlacement",
                MixError::InvalidParameter(_) => "InvalidParameter",
            },
            Self::Viz(VizError::Mix(_)) => "InvalidManifest",
            Self::Viz(VizError::EmptyModel) => "EmptyModel",
            Self::Viz(VizError::InvalidDimensions(..)) => "InvalidDimensions",
            Self::Viz(VizError::OutOfRange { .. }) => "OutOfRange",
            Self::Io(_) => "StorageError",
            Self::Corrupt(_) => "CorruptProject",
        }
    }

    /// HTTP status code for this error.
    pub fn status(&self) -> u16 {
        match self.code() {
            "ProjectNotFound" | "UnknownElement" => 404,
            "NoCandidate" => 409,
            "BackendUnavailable" | "BadGeneratedAudio" => 502,
            "StorageError" | "CorruptProject" | "InvalidManifest" => 500,
            "BadRequest" => 400,
            _ => 422,
        }
    }

    pub fn details(&self) -> Value {
        match self {
            Self::DurationOutOfRange { got, min, max } => json!({"duration_s": got, "min_s": min, "max_s": max}),
            Self::Placement(PlacementError::NoCandidate { hint }) => json!({
                "hint_window": hint.map(|h| json!({"lo_s": h.lo_s, "hi_s": h.hi_s})),
            }),
            Self::Placement(PlacementError::ClipTooLong { clip_s, base_s }) => {
                json!({"clip_s": clip_s, "base_s": base_s})
            }
            Self::Mix(MixError::UnknownElement(id)) => json!({"element_id": id}),
            Self::ProjectNotFound(id) => json!({"project_id": id}),
            _ => Value::Null,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code(),
            message: self.to_string(),
            details: self.details(),
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
