//! Turning text, image and audio inputs into clips plus colour metadata.
//!
//! Captioning and text-to-audio generation sit behind the [`Captioner`] and
//! [`Generator`] traits. Each has an HTTP implementation and a deterministic
//! offline stub.

mod caption;
mod color;
mod generate;

use std::sync::Arc;

pub use caption::{caption_image, Captioner, ImageInput, RemoteCaptioner, StubCaptioner, STUB_CAPTION};
pub use color::{
    dominant_color, extract_colors, palette_color, ColorLexicon, NamedColor, Rgb, PALETTE,
};
pub use generate::{
    sonify, Generator, GeneratorRequest, GeneratorResponse, RemoteGenerator, StubGenerator,
    StubMotif, DEFAULT_CLIP_S, MAX_CLIP_S, MIN_CLIP_S,
};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{decode_canonical, AudioBuffer, AudioError};
use crate::features::{estimate_pitch, PitchEstimate};

#[derive(Debug, Error)]
pub enum SonifyError {
    #[error("image could not be decoded: {0}")]
    BadImage(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("generated audio unusable: {0}")]
    BadGeneratedAudio(String),
    #[error("text input is empty")]
    EmptyText,
    #[error("clip duration {0} s outside 1..=30 s")]
    DurationOutOfRange(f64),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

pub(crate) fn decode_image(bytes: &[u8]) -> Result<image::DynamicImage, SonifyError> {
    image::load_from_memory(bytes).map_err(|e| SonifyError::BadImage(e.to_string()))
}

/// Runs `attempt` once plus up to `retries` more times.
pub(crate) fn with_retries<T>(
    retries: u32,
    mut attempt: impl FnMut() -> Result<T, String>,
) -> Result<T, SonifyError> {
    let mut last = String::new();
    for _ in 0..=retries {
        match attempt() {
            Ok(v) => return Ok(v),
            Err(e) => last = e,
        }
    }
    Err(SonifyError::BackendUnavailable(format!(
        "{} attempt(s) failed; last error: {last}",
        retries + 1
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Text,
    Image,
    Audio,
}

impl std::str::FromStr for ElementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(Self::Text),
            "image" => Ok(Self::Image),
            "audio" => Ok(Self::Audio),
            other => Err(format!("unknown element kind {other:?}")),
        }
    }
}

/// The raw user input.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementPayload {
    Text(String),
    Image {
        bytes: Vec<u8>,
        file_name: String,
        sidecar_caption: Option<String>,
    },
    Audio {
        bytes: Vec<u8>,
        file_name: String,
    },
}

impl ElementPayload {
    pub fn kind(&self) -> ElementKind {
        match self {
            Self::Text(_) => ElementKind::Text,
            Self::Image { .. } => ElementKind::Image,
            Self::Audio { .. } => ElementKind::Audio,
        }
    }
}

/// One user input with its derived caption, colour and clip.
#[derive(Debug, Clone)]
pub struct InputElement {
    pub id: String,
    pub kind: ElementKind,
    pub payload: ElementPayload,
    /// Empty for audio inputs.
    pub caption: String,
    pub color: Rgb,
    pub clip: AudioBuffer,
    pub pitch: Option<PitchEstimate>,
    pub seed: u64,
    pub created_at: DateTime<Utc>,
}

impl InputElement {
    /// Caption for text and image inputs, the file name for audio.
    pub fn label(&self) -> String {
        match &self.payload {
            ElementPayload::Audio { file_name, .. } => file_name.clone(),
            _ => self.caption.clone(),
        }
    }
}

/// Backends and colour words used while processing inputs.
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn Generator>,
    pub captioner: Arc<dyn Captioner>,
    pub lexicon: ColorLexicon,
}

impl Backends {
    /// Fully offline backends.
    pub fn stub() -> Self {
        Self {
            generator: Arc::new(StubGenerator),
            captioner: Arc::new(StubCaptioner),
            lexicon: ColorLexicon::default(),
        }
    }
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends").field("lexicon", &self.lexicon).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessOptions {
    pub duration_s: f64,
    pub seed: u64,
    pub palette_index: usize,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        Self {
            duration_s: DEFAULT_CLIP_S,
            seed: 0,
            palette_index: 0,
        }
    }
}

/// Builds a complete element from raw input, or fails without a partial
/// result.
///
/// Colour: the first colour word of the caption, else the image's dominant
/// colour, else the palette entry at `palette_index`.
pub fn process_element(
    id: impl Into<String>,
    payload: ElementPayload,
    backends: &Backends,
    options: ProcessOptions,
    created_at: DateTime<Utc>,
) -> Result<InputElement, SonifyError> {
    let fallback = palette_color(options.palette_index);
    let (caption, color, clip) = match &payload {
        ElementPayload::Text(text) => {
            let caption = text.trim().to_string();
            if caption.is_empty() {
                return Err(SonifyError::EmptyText);
            }
            let color = first_color(backends, &caption).unwrap_or(fallback);
            let clip = sonify(&caption, options.duration_s, options.seed, backends.generator.as_ref())?;
            (caption, color, clip)
        }
        ElementPayload::Image {
            bytes,
            file_name,
            sidecar_caption,
        } => {
            let input = ImageInput {
                bytes: bytes.clone(),
                file_name: file_name.clone(),
                sidecar_caption: sidecar_caption.clone(),
            };
            let caption = caption_image(&input, backends.captioner.as_ref())?;
            let color = match first_color(backends, &caption) {
                Some(c) => c,
                None => dominant_color(bytes)?,
            };
            let clip = sonify(&caption, options.duration_s, options.seed, backends.generator.as_ref())?;
            (caption, color, clip)
        }
        ElementPayload::Audio { bytes, .. } => (String::new(), fallback, decode_canonical(bytes)?),
    };
    let pitch = estimate_pitch(&clip).ok();
    Ok(InputElement {
        id: id.into(),
        kind: payload.kind(),
        payload,
        caption,
        color,
        clip,
        pitch,
        seed: options.seed,
        created_at,
    })
}

fn first_color(backends: &Backends, text: &str) -> Option<Rgb> {
    backends.lexicon.extract(text).first().map(|c| c.rgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{encode_wav, SAMPLE_RATE};
    use image::{ImageFormat, RgbImage};
    use std::io::Cursor;

    fn now() -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000, 0).unwrap()
    }

    fn image_bytes(format: ImageFormat, rgb: [u8; 3]) -> Vec<u8> {
        let mut out = Vec::new();
        RgbImage::from_pixel(16, 16, image::Rgb(rgb))
            .write_to(&mut Cursor::new(&mut out), format)
            .unwrap();
        out
    }

    #[test]
    fn text_element() {
        let el = process_element(
            "e1",
            ElementPayload::Text("a blue calm evening".into()),
            &Backends::stub(),
            ProcessOptions::default(),
            now(),
        )
        .unwrap();
        assert_eq!(el.caption, "a blue calm evening");
        assert_eq!(el.color, Rgb(0, 0, 255));
        assert_eq!(el.kind, ElementKind::Text);
        assert!((el.clip.duration_s() - DEFAULT_CLIP_S).abs() < 0.5);
        assert_eq!(el.label(), "a blue calm evening");
    }

    #[test]
    fn colorless_text_uses_palette() {
        let opts = ProcessOptions {
            palette_index: 11,
            ..ProcessOptions::default()
        };
        let el = process_element("e", ElementPayload::Text("quiet".into()), &Backends::stub(), opts, now()).unwrap();
        assert_eq!(el.color, PALETTE[3]);
    }

    #[test]
    fn audio_element_keeps_decoded_clip() {
        let clip = AudioBuffer::new(vec![0.25; 44_100], 44_100);
        let el = process_element(
            "meow",
            ElementPayload::Audio {
                bytes: encode_wav(&clip),
                file_name: "meow.wav".into(),
            },
            &Backends::stub(),
            ProcessOptions {
                palette_index: 2,
                ..ProcessOptions::default()
            },
            now(),
        )
        .unwrap();
        assert!(el.caption.is_empty());
        assert_eq!(el.color, PALETTE[2]);
        assert_eq!(el.clip.sample_rate(), SAMPLE_RATE);
        assert_eq!(el.clip.len(), 22_050);
        assert_eq!(el.label(), "meow.wav");
    }

    #[test]
    fn image_element_with_sidecar_caption() {
        let el = process_element(
            "cat",
            ElementPayload::Image {
                bytes: image_bytes(ImageFormat::Png, [10, 10, 10]),
                file_name: "cat.png".into(),
                sidecar_caption: Some("a yellow and white striped cat\n".into()),
            },
            &Backends::stub(),
            ProcessOptions::default(),
            now(),
        )
        .unwrap();
        assert_eq!(el.caption, "a yellow and white striped cat");
        assert_eq!(el.color, Rgb(255, 255, 0));
    }

    #[test]
    fn image_without_color_words_uses_dominant_color() {
        let el = process_element(
            "img",
            ElementPayload::Image {
                bytes: image_bytes(ImageFormat::Png, [0, 250, 0]),
                file_name: "x.png".into(),
                sidecar_caption: None,
            },
            &Backends::stub(),
            ProcessOptions::default(),
            now(),
        )
        .unwrap();
        assert_eq!(el.caption, STUB_CAPTION);
        assert_eq!(el.color, Rgb(8, 248, 8));
    }

    #[test]
    fn truncated_jpeg_is_bad_image() {
        let jpeg = image_bytes(ImageFormat::Jpeg, [200, 30, 30]);
        let cut = jpeg[..jpeg.len() / 3].to_vec();
        let input = ImageInput {
            bytes: cut,
            file_name: "cut.jpg".into(),
            sidecar_caption: Some("a red sunset".into()),
        };
        assert!(matches!(caption_image(&input, &StubCaptioner), Err(SonifyError::BadImage(_))));
        let ok = ImageInput {
            bytes: jpeg,
            ..input
        };
        assert_eq!(caption_image(&ok, &StubCaptioner).unwrap(), "a red sunset");
    }

    #[test]
    fn bad_payloads_propagate() {
        let err = process_element(
            "x",
            ElementPayload::Audio {
                bytes: vec![1, 2, 3],
                file_name: "x.wav".into(),
            },
            &Backends::stub(),
            ProcessOptions::default(),
            now(),
        )
        .unwrap_err();
        assert!(matches!(err, SonifyError::Audio(AudioError::MalformedWav(_))));
    }

    #[test]
    fn failing_captioner_means_no_element() {
        struct Down;
        impl Captioner for Down {
            fn caption(&self, _: &ImageInput) -> Result<String, SonifyError> {
                Err(SonifyError::BackendUnavailable("down".into()))
            }
        }
        let backends = Backends {
            captioner: Arc::new(Down),
            ..Backends::stub()
        };
        let err = process_element(
            "x",
            ElementPayload::Image {
                bytes: image_bytes(ImageFormat::Png, [1, 2, 3]),
                file_name: "x.png".into(),
                sidecar_caption: None,
            },
            &backends,
            ProcessOptions::default(),
            now(),
        )
        .unwrap_err();
        assert!(matches!(err, SonifyError::BackendUnavailable(_)));
    }
}
