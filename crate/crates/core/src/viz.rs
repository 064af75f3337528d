//! Stacked streamgraph of a composition: one thickness envelope for the base
//! track and one per placed clip, in 50 ms bins.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{rms_of, AudioBuffer};
use crate::mixer::{entry_contribution, ClipSource, MixError, MixManifest};
use crate::sonify::Rgb;

pub const BIN_S: f64 = 0.05;
pub const LAYER_OPACITY: f64 = 0.8;
pub const BASE_COLOR: Rgb = Rgb(160, 160, 160);
/// Fraction of the SVG height the tallest stack reaches.
const STACK_FILL: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum VizError {
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error("model has no bins")]
    EmptyModel,
    #[error("invalid dimensions {0}×{1}")]
    InvalidDimensions(u32, u32),
    #[error("time {t_s} s outside [0, {duration_s}]")]
    OutOfRange { t_s: f64, duration_s: f64 },
}

/// How an element's layer looks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStyle {
    pub color: Rgb,
    pub label: String,
    pub thumbnail_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamLayer {
    #[serde(rename = "id")]
    pub element_id: String,
    pub color: Rgb,
    pub start_s: f64,
    pub end_s: f64,
    pub thickness: Vec<f64>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_ref: Option<String>,
    #[serde(default)]
    pub score: f64,
}

/// Serializes as `{duration_s, bin_s, base, layers}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizModel {
    pub duration_s: f64,
    pub bin_s: f64,
    #[serde(rename = "base")]
    pub base_layer: Vec<f64>,
    pub layers: Vec<StreamLayer>,
}

impl VizModel {
    pub fn bin_count(&self) -> usize {
        self.base_layer.len()
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("viz model serializes")
    }
}

pub fn bin_count(duration_s: f64) -> usize {
    // the epsilon keeps exact multiples of the bin width from gaining a bin
    (duration_s / BIN_S - 1e-9).ceil().max(0.0) as usize
}

fn bin_bounds(b: usize, sample_rate: u32, len: usize) -> (usize, usize) {
    let sr = f64::from(sample_rate);
    let lo = ((b as f64 * BIN_S * sr).round() as usize).min(len);
    let hi = (((b + 1) as f64 * BIN_S * sr).round() as usize).min(len);
    (lo, hi)
}

/// Layers follow manifest order, which is element insertion order.
pub fn build_viz(
    base: &AudioBuffer,
    manifest: &MixManifest,
    clips: &dyn ClipSource,
    styles: &HashMap<String, LayerStyle>,
) -> Result<VizModel, VizError> {
    manifest.validate(base, clips)?;
    let n_bins = bin_count(base.duration_s());
    let sr = base.sample_rate();
    let base_layer = (0..n_bins)
        .map(|b| {
            let (lo, hi) = bin_bounds(b, sr, base.len());
            rms_of(&base.samples()[lo..hi])
        })
        .collect();

    let mut layers = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let clip = clips.clip(&entry.element_id).expect("validated");
        let (start, samples) = entry_contribution(entry, clip, base.len());
        let end = start + samples.len();
        let thickness = (0..n_bins)
            .map(|b| {
                let (lo, hi) = bin_bounds(b, sr, base.len());
                let (lo, hi) = (lo.max(start), hi.min(end));
                if lo < hi {
                    rms_of(&samples[lo - start..hi - start])
                } else {
                    0.0
                }
            })
            .collect();
        let style = styles.get(&entry.element_id).cloned().unwrap_or_else(|| LayerStyle {
            color: BASE_COLOR,
            label: entry.element_id.clone(),
            thumbnail_ref: None,
        });
        layers.push(StreamLayer {
            element_id: entry.element_id.clone(),
            color: style.color,
            start_s: entry.placement.start_s,
            end_s: entry.placement.end_s,
            thickness,
            label: style.label,
            thumbnail_ref: style.thumbnail_ref,
            score: entry.placement.score.value(),
        });
    }
    Ok(VizModel {
        duration_s: base.duration_s(),
        bin_s: BIN_S,
        base_layer,
        layers,
    })
}

fn escape_xml(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if c.is_control() => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Zero-baseline stacked area chart as SVG 1.1. Coordinates are printed
/// with two decimals so the output is byte-stable.
pub fn export_svg(viz: &VizModel, width_px: u32, height_px: u32) -> Result<Vec<u8>, VizError> {
    if width_px == 0 || height_px == 0 {
        return Err(VizError::InvalidDimensions(width_px, height_px));
    }
    let n = viz.bin_count();
    if n == 0 || viz.duration_s <= 0.0 {
        return Err(VizError::EmptyModel);
    }
    let (w, h) = (f64::from(width_px), f64::from(height_px));

    let bands: Vec<&[f64]> = std::iter::once(viz.base_layer.as_slice())
        .chain(viz.layers.iter().map(|l| l.thickness.as_slice()))
        .collect();
    let mut floors = vec![vec![0.0; n]];
    for band in &bands {
        let below = floors.last().expect("non-empty");
        let next = (0..n).map(|b| below[b] + band.get(b).copied().unwrap_or(0.0)).collect();
        floors.push(next);
    }
    let max_total = floors[bands.len()].iter().copied().fold(0.0, f64::max);
    let scale = if max_total > 0.0 { STACK_FILL * h / max_total } else { 0.0 };
    let x_of = |t: f64| t * w / viz.duration_s;
    let y_of = |v: f64| h - v * scale;
    let centre = |b: usize| x_of((b as f64 + 0.5) * viz.bin_s);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width_px}" height="{height_px}" viewBox="0 0 {width_px} {height_px}">"#
    );
    for (k, pair) in floors.windows(2).enumerate() {
        let (lower, upper) = (&pair[0], &pair[1]);
        let mut d = String::new();
        for (b, &v) in upper.iter().enumerate() {
            let cmd = if b == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", centre(b), y_of(v));
        }
        for b in (0..n).rev() {
            let _ = write!(d, "L{:.2},{:.2} ", centre(b), y_of(lower[b]));
        }
        d.push('Z');
        let (fill, opacity) = match k {
            0 => (BASE_COLOR, 1.0),
            _ => (viz.layers[k - 1].color, LAYER_OPACITY),
        };
        let _ = writeln!(
            svg,
            r#"  <path d="{d}" fill="{}" fill-opacity="{opacity:.2}"/>"#,
            fill.hex()
        );
    }
    for (k, layer) in viz.layers.iter().enumerate() {
        let mid = 0.5 * (layer.start_s + layer.end_s);
        let b = ((mid / viz.bin_s) as usize).min(n - 1);
        let y = y_of(0.5 * (floors[k + 1][b] + floors[k + 2][b]));
        let _ = writeln!(
            svg,
            r#"  <text x="{:.2}" y="{y:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            x_of(mid),
            escape_xml(&layer.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg.into_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayheadState {
    pub x_fraction: f64,
    pub active_element_ids: Vec<String>,
}

/// Horizontal position of the playhead and the layers sounding at `t_s`.
pub fn playhead_state(viz: &VizModel, t_s: f64) -> Result<PlayheadState, VizError> {
    if !(t_s >= 0.0 && t_s <= viz.duration_s) || viz.duration_s <= 0.0 {
        return Err(VizError::OutOfRange {
            t_s,
            duration_s: viz.duration_s,
        });
    }
    Ok(PlayheadState {
        x_fraction: t_s / viz.duration_s,
        active_element_ids: viz
            .layers
            .iter()
            .filter(|l| l.start_s <= t_s && t_s <= l.end_s)
            .map(|l| l.element_id.clone())
            .collect(),
    })
}
