//! Feature extraction: MFCC frames, spectral-flux onsets, tempo, beat grid
//! and pitch.
//!
//! Frame geometry is fixed: 2048-sample Hann frames, 512-sample hop, no
//! padding, at the canonical 22050 Hz rate.

mod pitch;
mod rhythm;
mod spectrum;

pub use pitch::{estimate_pitch, PitchEstimate};
pub use rhythm::{
    estimate_tempo, onset_envelope, onset_envelope_from_log_mel, track_beats, BeatGrid,
    OnsetEnvelope, TempoEstimate, FALLBACK_BPM,
};
pub use spectrum::{
    hann_window, hz_to_mel, log_mel, mel_filterbank, mel_to_hz, mfcc, mfcc_from_log_mel,
    stft_power, MelFilterbank,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, SAMPLE_RATE};

pub const FRAME_LEN: usize = 2048;
pub const HOP_LEN: usize = 512;
pub const N_BINS: usize = FRAME_LEN / 2 + 1;
pub const N_MELS: usize = 26;
pub const N_MFCC: usize = 13;
pub const LOG_FLOOR: f64 = 1e-10;

pub const HOP_S: f64 = HOP_LEN as f64 / SAMPLE_RATE as f64;
pub const FRAME_S: f64 = FRAME_LEN as f64 / SAMPLE_RATE as f64;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("signal too short: need {needed} samples/frames, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("expected {SAMPLE_RATE} Hz input, got {0} Hz")]
    NotCanonicalRate(u32),
}

pub(crate) fn check_canonical(buf: &AudioBuffer) -> Result<(), FeatureError> {
    if buf.sample_rate() != SAMPLE_RATE {
        return Err(FeatureError::NotCanonicalRate(buf.sample_rate()));
    }
    Ok(())
}

/// Number of full frames in `n` samples.
pub fn frame_count(n: usize) -> usize {
    if n < FRAME_LEN {
        0
    } else {
        (n - FRAME_LEN) / HOP_LEN + 1
    }
}

/// Per-frame MFCC rows. Coefficient 0 is the log-energy DCT term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccMatrix {
    frames: Vec<[f64; N_MFCC]>,
    pub frame_hop_s: f64,
    pub frame_len_s: f64,
}

impl MfccMatrix {
    pub fn from_frames(frames: Vec<[f64; N_MFCC]>) -> Self {
        Self {
            frames,
            frame_hop_s: HOP_S,
            frame_len_s: FRAME_S,
        }
    }

    pub fn frames(&self) -> &[[f64; N_MFCC]] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Start time of frame `i`.
    pub fn frame_time_s(&self, i: usize) -> f64 {
        i as f64 * self.frame_hop_s
    }
}

/// Everything the placement search needs from a base track, computed from
/// one shared log-mel pass.
#[derive(Debug, Clone)]
pub struct TrackAnalysis {
    pub duration_s: f64,
    pub mfcc: MfccMatrix,
    pub beats: BeatGrid,
}

pub fn analyze_track(buf: &AudioBuffer) -> Result<TrackAnalysis, FeatureError> {
    let log_mel = log_mel(buf)?;
    let env = onset_envelope_from_log_mel(&log_mel, buf.duration_s())?;
    let tempo = estimate_tempo(&env)?;
    let beats = track_beats(&env, tempo)?;
    Ok(TrackAnalysis {
        duration_s: buf.duration_s(),
        mfcc: mfcc_from_log_mel(&log_mel),
        beats,
    })
}
