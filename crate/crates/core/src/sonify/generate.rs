use std::f64::consts::PI;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::color::words;
use super::{with_retries, SonifyError};
use crate::audio::{decode_wav, encode_wav, resample, AudioBuffer, SAMPLE_RATE};

pub const MIN_CLIP_S: f64 = 1.0;
pub const MAX_CLIP_S: f64 = 30.0;
pub const DEFAULT_CLIP_S: f64 = 5.0;
/// Generated audio may deviate this much from the requested duration.
const DURATION_TOLERANCE: f64 = 0.10;

/// Wire request for a text-to-audio backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub prompt: String,
    pub duration_s: f64,
    pub seed: u64,
}

/// Wire response: a WAV body.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorResponse {
    pub wav_bytes: Vec<u8>,
}

/// Text → audio.
pub trait Generator: Send + Sync {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, SonifyError>;
}

/// HTTP generator: JSON POST `{"prompt","duration_s","seed"}`, WAV body back.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
}

impl RemoteGenerator {
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

impl Generator for RemoteGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, SonifyError> {
        let wav_bytes = with_retries(self.retries, || {
            self.agent
                .post(&self.endpoint)
                .send_json(request)
                .and_then(|mut resp| {
                    resp.body_mut()
                        .with_config()
                        .limit(256 * 1024 * 1024)
                        .read_to_vec()
                })
                .map_err(|e| e.to_string())
        })?;
        Ok(GeneratorResponse { wav_bytes })
    }
}

const PENTATONIC: [u32; 5] = [0, 2, 4, 7, 9];
const STUB_AMPLITUDE: f64 = 0.5;
const ATTACK_S: f64 = 0.010;
const RELEASE_S: f64 = 0.050;
/// Fraction of each beat a note sounds for.
const GATE: f64 = 0.8;

/// Offline generator. A SHA-256 of `(text, seed)` picks a five-note
/// pentatonic motif, a base pitch in 220–440 Hz and a tempo in 80–140 BPM;
/// the words "fast" and "slow" force 140 or 80 BPM. One sine note per beat.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubGenerator;

/// Musical parameters the stub derives from its input.
#[derive(Debug, Clone, PartialEq)]
pub struct StubMotif {
    pub base_hz: f64,
    pub tempo_bpm: f64,
    pub notes_hz: [f64; 5],
}

impl StubGenerator {
    pub fn motif(prompt: &str, seed: u64) -> StubMotif {
        let mut hasher = Sha256::new();
        hasher.update(prompt.as_bytes());
        hasher.update([0u8]);
        hasher.update(seed.to_le_bytes());
        let h = hasher.finalize();

        let base_hz = 220.0 + f64::from(u16::from_le_bytes([h[0], h[1]]) % 221);
        let mut tempo_bpm = 80.0 + f64::from(h[2] % 61);
        if let Some(forced) = words(prompt).find_map(|w| match w.as_str() {
            "fast" => Some(140.0),
            "slow" => Some(80.0),
            _ => None,
        }) {
            tempo_bpm = forced;
        }
        let notes_hz = std::array::from_fn(|k| {
            let semitones = PENTATONIC[usize::from(h[4 + k]) % 5] + 12 * u32::from(h[9 + k] % 2);
            base_hz * 2f64.powf(f64::from(semitones) / 12.0)
        });
        StubMotif {
            base_hz,
            tempo_bpm,
            notes_hz,
        }
    }

    pub fn render(request: &GeneratorRequest) -> AudioBuffer {
        let motif = Self::motif(&request.prompt, request.seed);
        let sr = f64::from(SAMPLE_RATE);
        let n = (request.duration_s * sr).round() as usize;
        let beat = 60.0 / motif.tempo_bpm;
        let gate = GATE * beat;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                let k = (t / beat).floor();
                let local = t - k * beat;
                if local >= gate {
                    return 0.0;
                }
                let env = (local / ATTACK_S).min(1.0) * ((gate - local) / RELEASE_S).min(1.0);
                let freq = motif.notes_hz[(k as usize) % 5];
                STUB_AMPLITUDE * env * (2.0 * PI * freq * local).sin()
            })
            .collect();
        AudioBuffer::new(samples, SAMPLE_RATE)
    }
}

impl Generator for StubGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, SonifyError> {
        Ok(GeneratorResponse {
            wav_bytes: encode_wav(&Self::render(request)),
        })
    }
}

/// Turns descriptive text into a canonical-rate clip through `generator`.
pub fn sonify(
    text: &str,
    duration_s: f64,
    seed: u64,
    generator: &dyn Generator,
) -> Result<AudioBuffer, SonifyError> {
    if text.trim().is_empty() {
        return Err(SonifyError::EmptyText);
    }
    if !(MIN_CLIP_S..=MAX_CLIP_S).contains(&duration_s) {
        return Err(SonifyError::DurationOutOfRange(duration_s));
    }
    let request = GeneratorRequest {
        prompt: text.to_string(),
        duration_s,
        seed,
    };
    let response = generator.generate(&request)?;
    let clip = decode_wav(&response.wav_bytes)
        .map_err(|e| SonifyError::BadGeneratedAudio(e.to_string()))?;
    let got = clip.duration_s();
    if (got - duration_s).abs() > DURATION_TOLERANCE * duration_s {
        return Err(SonifyError::BadGeneratedAudio(format!(
            "requested {duration_s:.2} s, got {got:.2} s"
        )));
    }
    resample(&clip, SAMPLE_RATE).map_err(|e| SonifyError::BadGeneratedAudio(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{estimate_tempo, onset_envelope};

    #[test]
    fn stub_is_deterministic() {
        let a = sonify("a calm evening", 4.0, 9, &StubGenerator).unwrap();
        let b = sonify("a calm evening", 4.0, 9, &StubGenerator).unwrap();
        assert_eq!(a, b);
        let c = sonify("a calm evening", 4.0, 10, &StubGenerator).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stub_duration_and_ranges() {
        let clip = sonify("anything", 4.0, 1, &StubGenerator).unwrap();
        assert!((clip.duration_s() - 4.0).abs() <= 0.4);
        for seed in 0..50 {
            let m = StubGenerator::motif("ranges", seed);
            assert!((220.0..=440.0).contains(&m.base_hz));
            assert!((80.0..=140.0).contains(&m.tempo_bpm));
        }
    }

    #[test]
    fn tempo_words_force_tempo() {
        assert_eq!(StubGenerator::motif("a FAST run", 3).tempo_bpm, 140.0);
        assert_eq!(StubGenerator::motif("slow rain", 3).tempo_bpm, 80.0);
    }

    #[test]
    fn fast_clip_measures_140_bpm() {
        for seed in 0..5 {
            let clip = sonify("fast bright city lights", 5.0, seed, &StubGenerator).unwrap();
            let bpm = estimate_tempo(&onset_envelope(&clip).unwrap()).unwrap().bpm;
            assert!((bpm - 140.0).abs() <= 5.0, "seed {seed}: {bpm}");
        }
    }

    #[test]
    fn input_validation() {
        assert!(matches!(sonify("  ", 5.0, 0, &StubGenerator), Err(SonifyError::EmptyText)));
        assert!(matches!(
            sonify("x", 0.5, 0, &StubGenerator),
            Err(SonifyError::DurationOutOfRange(_))
        ));
        assert!(matches!(
            sonify("x", 31.0, 0, &StubGenerator),
            Err(SonifyError::DurationOutOfRange(_))
        ));
    }

    struct Fixed(Vec<u8>);
    impl Generator for Fixed {
        fn generate(&self, _: &GeneratorRequest) -> Result<GeneratorResponse, SonifyError> {
            Ok(GeneratorResponse { wav_bytes: self.0.clone() })
        }
    }

    #[test]
    fn generated_audio_is_checked_and_resampled() {
        let garbage = Fixed(b"RIFF....".to_vec());
        assert!(matches!(
            sonify("x", 2.0, 0, &garbage),
            Err(SonifyError::BadGeneratedAudio(_))
        ));
        let too_short = Fixed(encode_wav(&AudioBuffer::silence(22_050, SAMPLE_RATE)));
        assert!(matches!(
            sonify("x", 2.0, 0, &too_short),
            Err(SonifyError::BadGeneratedAudio(_))
        ));
        let hi_rate = Fixed(encode_wav(&AudioBuffer::silence(2 * 44_100, 44_100)));
        let clip = sonify("x", 2.0, 0, &hi_rate).unwrap();
        assert_eq!(clip.sample_rate(), SAMPLE_RATE);
        assert_eq!(clip.len(), 2 * 22_050);
    }
}
