use std::time::Duration;

use serde::Deserialize;
use ureq::unversioned::multipart::{Form, Part};

use super::{decode_image, with_retries, SonifyError};

pub const STUB_CAPTION: &str = "an image";

/// Image bytes plus an optional sidecar caption (the contents of a
/// `<stem>.caption.txt` file next to the image).
#[derive(Debug, Clone, Default)]
pub struct ImageInput {
    pub bytes: Vec<u8>,
    pub file_name: String,
    pub sidecar_caption: Option<String>,
}

/// Image → natural-language description.
pub trait Captioner: Send + Sync {
    fn caption(&self, image: &ImageInput) -> Result<String, SonifyError>;
}

/// Offline captioner: echoes the sidecar caption, or [`STUB_CAPTION`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StubCaptioner;

impl Captioner for StubCaptioner {
    fn caption(&self, image: &ImageInput) -> Result<String, SonifyError> {
        Ok(image
            .sidecar_caption
            .as_deref()
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .unwrap_or(STUB_CAPTION)
            .to_string())
    }
}

/// HTTP captioner: multipart POST with an `image` part, answered by
/// `{"caption": "..."}`.
#[derive(Debug, Clone)]
pub struct RemoteCaptioner {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
}

impl RemoteCaptioner {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
            retries,
        }
    }
}

#[derive(Deserialize)]
struct CaptionResponse {
    caption: String,
}

impl Captioner for RemoteCaptioner {
    fn caption(&self, image: &ImageInput) -> Result<String, SonifyError> {
        let mime = image::guess_format(&image.bytes)
            .map(|f| f.to_mime_type())
            .unwrap_or("application/octet-stream");
        let file_name = if image.file_name.is_empty() {
            "image"
        } else {
            image.file_name.as_str()
        };
        let reply: CaptionResponse = with_retries(self.retries, || {
            let part = Part::bytes(&image.bytes)
                .file_name(file_name)
                .mime_str(mime)
                .map_err(|e| e.to_string())?;
            let form = Form::new().part("image", part);
            self.agent
                .post(&self.endpoint)
                .send(form)
                .and_then(|mut resp| resp.body_mut().read_json::<CaptionResponse>())
                .map_err(|e| e.to_string())
        })?;
        let caption = reply.caption.trim().to_string();
        if caption.is_empty() {
            return Err(SonifyError::BackendUnavailable(
                "captioner returned an empty caption".into(),
            ));
        }
        Ok(caption)
    }
}

/// Checks that the image decodes, then asks the captioner for a description.
pub fn caption_image(image: &ImageInput, captioner: &dyn Captioner) -> Result<String, SonifyError> {
    decode_image(&image.bytes)?;
    let caption = captioner.caption(image)?;
    if caption.trim().is_empty() {
        return Err(SonifyError::BackendUnavailable("empty caption".into()));
    }
    Ok(caption)
}
