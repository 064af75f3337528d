//! WAV decode/encode, linear resampling and RMS over the engine's mono buffers.
//!
//! Everything downstream works on [`AudioBuffer`]: mono, samples in `[-1, 1]`,
//! stored as `f64` so feature and mixing invariants hold well below 1e-9.

use std::io::Cursor;

use thiserror::Error;

/// Canonical engine sample rate.
pub const SAMPLE_RATE: u32 = 22_050;

const MIN_RATE: u32 = 8_000;
const MAX_RATE: u32 = 96_000;
const I16_SCALE: f64 = 32_768.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("interval [{start_s}, {end_s}) covers no samples")]
    EmptyInterval { start_s: f64, end_s: f64 },
    #[error("sample rate {0} Hz outside 8000..=96000")]
    RateOutOfRange(u32),
}

/// Mono PCM buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Builds a buffer, clamping every sample into `[-1, 1]`. Non-finite
    /// samples become 0.
    pub fn new(mut samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        for s in &mut samples {
            *s = if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 };
        }
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Always 1; stereo input is collapsed on decode.
    pub fn channel_count(&self) -> u16 {
        1
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Sample index nearest to `t_s`, clamped to `[0, len]`.
    pub fn index_at(&self, t_s: f64) -> usize {
        let i = (t_s * f64::from(self.sample_rate)).round();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.samples.len())
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Decodes a RIFF/WAVE stream (PCM16 or float32, mono or stereo) to mono at
/// the source rate. Stereo is averaged per sample.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{} channels",
            spec.channels
        )));
    }
    if !(MIN_RATE..=MAX_RATE).contains(&spec.sample_rate) {
        return Err(AudioError::UnsupportedEncoding(format!(
            "sample rate {} Hz",
            spec.sample_rate
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / I16_SCALE))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => {
            let raw: Vec<f32> = reader
                .into_samples::<f32>()
                .collect::<Result<_, _>>()
                .map_err(map_hound)?;
            if raw.iter().any(|s| !s.is_finite()) {
                return Err(AudioError::MalformedWav("non-finite float sample".into()));
            }
            raw.into_iter().map(f64::from).collect()
        }
        (format, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "{format:?} {bits}-bit"
            )))
        }
    };
    let mono = if spec.channels == 2 {
        if !interleaved.len().is_multiple_of(2) {
            return Err(AudioError::MalformedWav("odd stereo sample count".into()));
        }
        interleaved
            .chunks_exact(2)
            .map(|lr| (lr[0] + lr[1]) / 2.0)
            .collect()
    } else {
        interleaved
    };
    Ok(AudioBuffer::new(mono, spec.sample_rate))
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("unsupported format".into()),
        hound::Error::IoError(e) => AudioError::MalformedWav(e.to_string()),
        hound::Error::FormatError(msg) => AudioError::MalformedWav(msg.to_string()),
        other => AudioError::MalformedWav(other.to_string()),
    }
}

/// Quantizes one sample to int16 the way [`encode_wav`] does.
pub fn quantize_i16(s: f64) -> i16 {
    (s * I16_SCALE)
        .round()
        .clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

/// Encodes as 16-bit PCM mono at the buffer's rate.
pub fn encode_wav(buf: &AudioBuffer) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut out = Vec::with_capacity(44 + buf.len() * 2);
    {
        // Writing into memory cannot fail.
        let mut writer =
            hound::WavWriter::new(Cursor::new(&mut out), spec).expect("in-memory WAV header");
        let mut pcm = writer.get_i16_writer(buf.len() as u32);
        for &s in &buf.samples {
            pcm.write_sample(quantize_i16(s));
        }
        pcm.flush().expect("in-memory WAV data");
        writer.finalize().expect("in-memory WAV finalize");
    }
    out
}

/// Snaps a buffer onto the PCM16 grid, so that storing it with
/// [`encode_wav`] and decoding it again is lossless.
pub fn quantize_to_pcm16(buf: &AudioBuffer) -> AudioBuffer {
    let samples = buf
        .samples
        .iter()
        .map(|&s| f64::from(quantize_i16(s)) / I16_SCALE)
        .collect();
    AudioBuffer::new(samples, buf.sample_rate)
}

/// Linear-interpolation resampler. Output length is
/// `round(len * target / source)`.
pub fn resample(buf: &AudioBuffer, target_rate_hz: u32) -> Result<AudioBuffer, AudioError> {
    if !(MIN_RATE..=MAX_RATE).contains(&target_rate_hz) {
        return Err(AudioError::RateOutOfRange(target_rate_hz));
    }
    if target_rate_hz == buf.sample_rate {
        return Ok(buf.clone());
    }
    let src = &buf.samples;
    let ratio = f64::from(buf.sample_rate) / f64::from(target_rate_hz);
    let out_len = (src.len() as f64 / ratio).round() as usize;
    let last = src.len().saturating_sub(1);
    let out = (0..out_len)
        .map(|i| {
            let x = i as f64 * ratio;
            let i0 = (x.floor() as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = x - i0 as f64;
            let (a, b) = (src[i0], src[i1]);
            // `a + (b - a) * f` keeps constant signals exact.
            a + (b - a) * frac
        })
        .collect();
    Ok(AudioBuffer::new(out, target_rate_hz))
}

/// Decode, then resample to the canonical engine rate.
pub fn decode_canonical(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    resample(&decode_wav(bytes)?, SAMPLE_RATE)
}

/// Root mean square over `[start_s, end_s)`.
pub fn rms(buf: &AudioBuffer, start_s: f64, end_s: f64) -> Result<f64, AudioError> {
    let (a, b) = (buf.index_at(start_s), buf.index_at(end_s));
    if b <= a {
        return Err(AudioError::EmptyInterval { start_s, end_s });
    }
    Ok(rms_of(&buf.samples[a..b]))
}

/// RMS of a raw slice; 0 for an empty slice.
pub fn rms_of(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples.iter().map(|s| s * s).sum();
    (sum / samples.len() as f64).sqrt()
}
