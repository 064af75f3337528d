//! Renders the base track plus placed clips into one buffer.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{rms, rms_of, AudioBuffer};
use crate::placement::PlacementPlan;

/// Clip loudness target relative to the base over the same interval.
pub const TARGET_RATIO: f64 = 0.8;
pub const MIN_GAIN: f64 = 0.05;
pub const MAX_GAIN: f64 = 4.0;
pub const PEAK_CEILING: f64 = 0.999;
pub const MAX_DEFAULT_FADE_S: f64 = 0.5;
const SILENT_RMS: f64 = 1e-12;
/// Slack for interval ends computed in floating point.
const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MixError {
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("unknown element {0}")]
    UnknownElement(String),
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub element_id: String,
    pub placement: PlacementPlan,
    pub gain: f64,
    pub fade_s: f64,
}

impl MixEntry {
    /// Entry with the default fade length.
    pub fn new(placement: PlacementPlan, gain: f64) -> Self {
        Self {
            element_id: placement.element_id.clone(),
            fade_s: default_fade_s(placement.duration_s()),
            placement,
            gain,
        }
    }
}

/// `min(0.5 s, 10% of the clip)`.
pub fn default_fade_s(clip_duration_s: f64) -> f64 {
    MAX_DEFAULT_FADE_S.min(0.1 * clip_duration_s)
}

/// Everything needed to render a mix, apart from the audio itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixManifest {
    pub entries: Vec<MixEntry>,
    pub master_gain: f64,
}

impl Default for MixManifest {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            master_gain: 1.0,
        }
    }
}

impl MixManifest {
    pub fn entry(&self, element_id: &str) -> Option<&MixEntry> {
        self.entries.iter().find(|e| e.element_id == element_id)
    }

    /// Checks every entry against the base duration and the clip store.
    pub fn validate(&self, base: &AudioBuffer, clips: &dyn ClipSource) -> Result<(), MixError> {
        let invalid = |msg: String| Err(MixError::InvalidManifest(msg));
        if !(self.master_gain.is_finite() && self.master_gain > 0.0) {
            return invalid(format!("master gain {} must be positive", self.master_gain));
        }
        let base_s = base.duration_s();
        for (i, e) in self.entries.iter().enumerate() {
            if self.entries[..i].iter().any(|o| o.element_id == e.element_id) {
                return invalid(format!("duplicate entry {}", e.element_id));
            }
            let Some(clip) = clips.clip(&e.element_id) else {
                return invalid(format!("no clip for {}", e.element_id));
            };
            if clip.sample_rate() != base.sample_rate() {
                return invalid(format!("clip {} is not at the base rate", e.element_id));
            }
            let p = &e.placement;
            if !(p.start_s >= 0.0 && p.start_s < p.end_s && p.end_s <= base_s + TIME_EPS) {
                return invalid(format!(
                    "{} placed at [{}, {}] outside [0, {base_s}]",
                    e.element_id, p.start_s, p.end_s
                ));
            }
            if !(e.gain.is_finite() && e.gain >= 0.0) {
                return invalid(format!("{} has gain {}", e.element_id, e.gain));
            }
            if !(e.fade_s >= 0.0 && e.fade_s <= 0.5 * p.duration_s() + TIME_EPS) {
                return invalid(format!("{} has fade {} s", e.element_id, e.fade_s));
            }
        }
        Ok(())
    }
}

/// Lookup of rendered clips by element id.
pub trait ClipSource {
    fn clip(&self, element_id: &str) -> Option<&AudioBuffer>;
}

impl ClipSource for HashMap<String, AudioBuffer> {
    fn clip(&self, element_id: &str) -> Option<&AudioBuffer> {
        self.get(element_id)
    }
}

impl ClipSource for BTreeMap<String, AudioBuffer> {
    fn clip(&self, element_id: &str) -> Option<&AudioBuffer> {
        self.get(element_id)
    }
}

/// `0.8 · rms(base over the interval) / rms(clip)`, clamped to
/// `[0.05, 4]`; 1 for a silent clip.
pub fn auto_gain(base: &AudioBuffer, clip: &AudioBuffer, placement: &PlacementPlan) -> f64 {
    let clip_rms = rms_of(clip.samples());
    if clip_rms < SILENT_RMS {
        return 1.0;
    }
    let base_rms = rms(base, placement.start_s, placement.end_s).unwrap_or(0.0);
    (TARGET_RATIO * base_rms / clip_rms).clamp(MIN_GAIN, MAX_GAIN)
}

/// Equal-power fade weight at sample `i` of an `n`-sample clip.
fn fade_weight(i: usize, n: usize, fade_len: f64) -> f64 {
    if fade_len <= 0.0 {
        return 1.0;
    }
    let head = (i as f64 + 0.5) / fade_len;
    let tail = (n - i) as f64 - 0.5;
    let tail = tail / fade_len;
    let w_in = if head < 1.0 { (FRAC_PI_2 * head).sin() } else { 1.0 };
    let w_out = if tail < 1.0 { (FRAC_PI_2 * tail).sin() } else { 1.0 };
    w_in * w_out
}

/// Gain-scaled, faded clip samples as they enter the mix, and the base
/// sample index where they start. Samples past the base end are dropped.
pub fn entry_contribution(entry: &MixEntry, clip: &AudioBuffer, base_len: usize) -> (usize, Vec<f64>) {
    let sr = f64::from(clip.sample_rate());
    let start = (entry.placement.start_s * sr).round() as usize;
    let n = ((entry.placement.duration_s() * sr).round() as usize).min(clip.len());
    let kept = n.min(base_len.saturating_sub(start));
    let fade_len = entry.fade_s * sr;
    let samples = clip.samples()[..kept]
        .iter()
        .enumerate()
        .map(|(i, &x)| entry.gain * fade_weight(i, n, fade_len) * x)
        .collect();
    (start, samples)
}

/// Base plus every entry, then master gain, then peak normalization to
/// 0.999. Entries are summed in element-id order so any permutation of the
/// manifest gives the same bits.
pub fn render_mix(
    base: &AudioBuffer,
    manifest: &MixManifest,
    clips: &dyn ClipSource,
) -> Result<AudioBuffer, MixError> {
    manifest.validate(base, clips)?;
    let mut out = base.samples().to_vec();
    let mut entries: Vec<&MixEntry> = manifest.entries.iter().collect();
    entries.sort_by(|a, b| a.element_id.cmp(&b.element_id));
    for entry in entries {
        let clip = clips.clip(&entry.element_id).expect("validated");
        let (start, samples) = entry_contribution(entry, clip, out.len());
        for (o, s) in out[start..].iter_mut().zip(samples) {
            *o += s;
        }
    }
    if manifest.master_gain != 1.0 {
        out.iter_mut().for_each(|x| *x *= manifest.master_gain);
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > PEAK_CEILING {
        let scale = PEAK_CEILING / peak;
        // the clamp absorbs a possible one-ulp overshoot of the product
        out.iter_mut()
            .for_each(|x| *x = (*x * scale).clamp(-PEAK_CEILING, PEAK_CEILING));
    }
    Ok(AudioBuffer::new(out, base.sample_rate()))
}

/// Fields of a single entry a user may change.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EntryUpdate {
    pub gain: Option<f64>,
    pub start_s: Option<f64>,
    pub fade_s: Option<f64>,
}

/// New manifest with one entry changed. Moving an entry keeps its length.
pub fn update_entry(
    manifest: &MixManifest,
    element_id: &str,
    update: EntryUpdate,
    base_duration_s: f64,
) -> Result<MixManifest, MixError> {
    let mut next = manifest.clone();
    let entry = next
        .entries
        .iter_mut()
        .find(|e| e.element_id == element_id)
        .ok_or_else(|| MixError::UnknownElement(element_id.to_string()))?;
    if let Some(gain) = update.gain {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(MixError::InvalidParameter(format!("gain {gain} must be ≥ 0")));
        }
        entry.gain = gain;
    }
    if let Some(start) = update.start_s {
        let len = entry.placement.duration_s();
        if !(start.is_finite() && start >= 0.0 && start + len <= base_duration_s + TIME_EPS) {
            return Err(MixError::InvalidPlacement(format!(
                "[{start}, {}] does not fit in [0, {base_duration_s}]",
                start + len
            )));
        }
        if start != entry.placement.start_s {
            entry.placement.start_s = start;
            entry.placement.end_s = start + len;
            entry.placement.snapped_beat_index = None;
        }
    }
    if let Some(fade) = update.fade_s {
        let limit = 0.5 * entry.placement.duration_s();
        if !(fade.is_finite() && fade >= 0.0 && fade <= limit + TIME_EPS) {
            return Err(MixError::InvalidParameter(format!(
                "fade {fade} s must be within [0, {limit}]"
            )));
        }
        entry.fade_s = fade;
    }
    Ok(next)
}
