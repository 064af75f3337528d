//! Where a clip enters the base track.
//!
//! Every candidate start (a beat, or a 0.25 s grid point when the beat grid
//! is unreliable) is scored by the cosine similarity between the clip's mean
//! MFCC vector and the base track's mean MFCC vector over the window the clip
//! would cover. Coefficient 0 is left out so loudness does not drive the
//! choice. The best score wins; ties go to the earliest start.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, MfccMatrix, TrackAnalysis, N_MFCC};

pub const SIGNATURE_LEN: usize = N_MFCC - 1;
pub const GRID_STEP_S: f64 = 0.25;
/// A candidate may overlap each already placed clip by less than this
/// fraction of its own length.
pub const MAX_OVERLAP: f64 = 0.5;
const DEGENERATE_NORM: f64 = 1e-12;

pub type Signature = [f64; SIGNATURE_LEN];

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no admissible start position{}", hint_suffix(.hint))]
    NoCandidate { hint: Option<TimeWindow> },
    #[error("clip ({clip_s:.2} s) is not shorter than the base track ({base_s:.2} s)")]
    ClipTooLong { clip_s: f64, base_s: f64 },
    #[error("invalid hint window [{0}, {1}]")]
    InvalidHint(f64, f64),
}

fn hint_suffix(hint: &Option<TimeWindow>) -> String {
    hint.map(|h| format!(" inside hint [{}, {}]", h.lo_s, h.hi_s))
        .unwrap_or_default()
}

/// Cosine similarity, always within `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn new(value: f64) -> Self {
        Self(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Closed time window, used both for hints and occupied intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub lo_s: f64,
    pub hi_s: f64,
}

impl TimeWindow {
    pub fn new(lo_s: f64, hi_s: f64) -> Self {
        Self { lo_s, hi_s }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo_s <= t && t <= self.hi_s
    }

    pub fn overlap(&self, start_s: f64, end_s: f64) -> f64 {
        (end_s.min(self.hi_s) - start_s.max(self.lo_s)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub element_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub score: SimilarityScore,
    pub snapped_beat_index: Option<usize>,
    pub hint_window: Option<TimeWindow>,
    /// Set when the clip runs past the end of the base and was cut.
    #[serde(default)]
    pub truncated: bool,
}

impl PlacementPlan {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn interval(&self) -> TimeWindow {
        TimeWindow::new(self.start_s, self.end_s)
    }
}

/// Mean of MFCC coefficients 1–12 over all frames.
pub fn clip_signature(clip_mfcc: &MfccMatrix) -> Result<Signature, PlacementError> {
    mean_signature(clip_mfcc.frames()).ok_or(PlacementError::Feature(FeatureError::TooShort {
        needed: 1,
        got: 0,
    }))
}

fn mean_signature(frames: &[[f64; N_MFCC]]) -> Option<Signature> {
    if frames.is_empty() {
        return None;
    }
    let mut sum = [0.0; SIGNATURE_LEN];
    for frame in frames {
        for (s, c) in sum.iter_mut().zip(&frame[1..]) {
            *s += c;
        }
    }
    let n = frames.len() as f64;
    Some(sum.map(|s| s / n))
}

/// `a·b / (|a||b|)`, or 0 when either norm is below 1e-12.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<SimilarityScore, PlacementError> {
    if a.len() != b.len() {
        return Err(PlacementError::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return Ok(SimilarityScore::new(0.0));
    }
    Ok(SimilarityScore::new(dot / (na * nb)))
}

/// Signature of the base window a clip with `n_frames` frames would cover
/// when starting at `start_s`. Frames past the end of the base are dropped.
pub fn window_signature(base_mfcc: &MfccMatrix, start_s: f64, n_frames: usize) -> Option<Signature> {
    let first = (start_s / base_mfcc.frame_hop_s).round().max(0.0) as usize;
    let last = (first + n_frames).min(base_mfcc.len());
    if first >= last {
        return None;
    }
    mean_signature(&base_mfcc.frames()[first..last])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub start_s: f64,
    pub beat_index: Option<usize>,
}

/// The clip being placed.
#[derive(Debug, Clone, Copy)]
pub struct ClipQuery<'a> {
    pub mfcc: &'a MfccMatrix,
    pub duration_s: f64,
}

/// Admissible start positions, in increasing order.
pub fn candidate_starts(
    base: &TrackAnalysis,
    clip_duration_s: f64,
    hint: Option<TimeWindow>,
    occupied: &[TimeWindow],
) -> Vec<Candidate> {
    let latest = base.duration_s - clip_duration_s;
    let admissible = |t: f64| {
        t >= 0.0
            && t <= latest
            && hint.is_none_or(|h| h.contains(t))
            && occupied
                .iter()
                .all(|o| o.overlap(t, t + clip_duration_s) < MAX_OVERLAP * clip_duration_s)
    };
    let grid = |lo: f64, hi: f64| -> Vec<Candidate> {
        let first = (lo / GRID_STEP_S).ceil().max(0.0) as usize;
        let last = (hi / GRID_STEP_S).floor();
        if last < first as f64 {
            return Vec::new();
        }
        (first..=last as usize)
            .map(|k| Candidate {
                start_s: k as f64 * GRID_STEP_S,
                beat_index: None,
            })
            .filter(|c| admissible(c.start_s))
            .collect()
    };

    if base.beats.low_confidence {
        let (lo, hi) = hint.map_or((0.0, latest), |h| (h.lo_s, h.hi_s.min(latest)));
        return grid(lo, hi);
    }
    let on_beats: Vec<Candidate> = base
        .beats
        .beat_times_s
        .iter()
        .enumerate()
        .filter(|&(_, &t)| admissible(t))
        .map(|(i, &t)| Candidate {
            start_s: t,
            beat_index: Some(i),
        })
        .collect();
    match hint {
        // A hint narrower than the beat spacing may hold no beat at all.
        Some(h) if on_beats.is_empty() => grid(h.lo_s, h.hi_s.min(latest)),
        _ => on_beats,
    }
}

/// Picks the start maximizing MFCC cosine similarity between clip and base.
pub fn find_placement(
    element_id: &str,
    base: &TrackAnalysis,
    clip: ClipQuery<'_>,
    hint: Option<TimeWindow>,
    occupied: &[TimeWindow],
) -> Result<PlacementPlan, PlacementError> {
    if let Some(h) = hint {
        if !(h.lo_s.is_finite() && h.hi_s.is_finite()) || h.lo_s < 0.0 || h.hi_s < h.lo_s {
            return Err(PlacementError::InvalidHint(h.lo_s, h.hi_s));
        }
    }
    if clip.duration_s >= base.duration_s {
        return Err(PlacementError::ClipTooLong {
            clip_s: clip.duration_s,
            base_s: base.duration_s,
        });
    }
    let target = clip_signature(clip.mfcc)?;
    let n_frames = clip.mfcc.len();

    let mut best: Option<(Candidate, SimilarityScore)> = None;
    for cand in candidate_starts(base, clip.duration_s, hint, occupied) {
        let Some(window) = window_signature(&base.mfcc, cand.start_s, n_frames) else {
            continue;
        };
        let score = cosine_similarity(&window, &target)?;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((cand, score));
        }
    }
    let (cand, score) = best.ok_or(PlacementError::NoCandidate { hint })?;
    Ok(PlacementPlan {
        element_id: element_id.to_string(),
        start_s: cand.start_s,
        end_s: cand.start_s + clip.duration_s,
        score,
        snapped_beat_index: cand.beat_index,
        hint_window: hint,
        truncated: false,
    })
}
