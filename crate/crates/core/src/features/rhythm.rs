//! Spectral-flux onsets, autocorrelation tempo and greedy beat snapping.

use serde::{Deserialize, Serialize};

use super::{log_mel, FeatureError, FRAME_LEN, HOP_LEN, HOP_S, N_MELS};
use crate::audio::{AudioBuffer, SAMPLE_RATE};

pub const FALLBACK_BPM: f64 = 120.0;
const MIN_BPM: f64 = 40.0;
const MAX_BPM: f64 = 200.0;
const MIN_TEMPO_SECONDS: f64 = 4.0;
/// Beats snap to the envelope maximum within this fraction of a period.
const SNAP_FRACTION: f64 = 0.15;
/// Width of the log-normal tempo prior, in octaves.
const PRIOR_OCTAVES: f64 = 1.0;

/// Per-hop spectral flux. Value `i` measures the energy rise brought in by the
/// newest hop of frame `i`, so it is stamped at that hop's start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetEnvelope {
    pub values: Vec<f64>,
    pub hop_s: f64,
    pub offset_s: f64,
    pub duration_s: f64,
}

impl OnsetEnvelope {
    pub fn time_of(&self, i: usize) -> f64 {
        self.offset_s + i as f64 * self.hop_s
    }

    /// Fractional hop index for time `t_s`.
    fn index_of(&self, t_s: f64) -> f64 {
        (t_s - self.offset_s) / self.hop_s
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn onset_envelope(buf: &AudioBuffer) -> Result<OnsetEnvelope, FeatureError> {
    onset_envelope_from_log_mel(&log_mel(buf)?, buf.duration_s())
}

/// Sum over bands of positive log-mel increases; the first value is 0.
pub fn onset_envelope_from_log_mel(
    log_mel: &[[f64; N_MELS]],
    duration_s: f64,
) -> Result<OnsetEnvelope, FeatureError> {
    if log_mel.len() < 2 {
        return Err(FeatureError::TooShort {
            needed: 2,
            got: log_mel.len(),
        });
    }
    let values = std::iter::once(0.0)
        .chain(log_mel.windows(2).map(|w| {
            w[1].iter()
                .zip(&w[0])
                .map(|(now, prev)| (now - prev).max(0.0))
                .sum()
        }))
        .collect();
    Ok(OnsetEnvelope {
        values,
        hop_s: HOP_S,
        offset_s: (FRAME_LEN - HOP_LEN) as f64 / f64::from(SAMPLE_RATE),
        duration_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempoEstimate {
    pub bpm: f64,
    /// Set when the envelope shows no periodicity and `bpm` is the fallback.
    pub low_confidence: bool,
}

fn bpm_of_lag(lag: f64, hop_s: f64) -> f64 {
    60.0 / (lag * hop_s)
}

/// Autocorrelation tempo over 40–200 BPM.
///
/// Integer lags are scored by the autocorrelation summed over the lag and its
/// two neighbours (hop quantization splits a true period across adjacent
/// lags), weighted by a one-octave log-normal prior centred on 120 BPM.
/// The winning lag is then refined to sub-hop precision from the centroids
/// of its harmonics.
pub fn estimate_tempo(env: &OnsetEnvelope) -> Result<TempoEstimate, FeatureError> {
    if env.duration_s < MIN_TEMPO_SECONDS {
        let needed = (MIN_TEMPO_SECONDS / env.hop_s).ceil() as usize;
        return Err(FeatureError::TooShort {
            needed,
            got: env.len(),
        });
    }
    let fallback = TempoEstimate {
        bpm: FALLBACK_BPM,
        low_confidence: true,
    };
    let n = env.len();
    let mean = env.values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = env.values.iter().map(|v| v - mean).collect();
    let energy: f64 = centered.iter().map(|v| v * v).sum();
    if energy <= 0.0 {
        return Ok(fallback);
    }

    let min_lag = (60.0 / (MAX_BPM * env.hop_s)).ceil() as usize;
    let max_lag = (60.0 / (MIN_BPM * env.hop_s)).floor() as usize;
    let acf_len = n.min(max_lag.max(n / 2) + 2);
    let acf: Vec<f64> = (0..acf_len)
        .map(|lag| {
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / energy
        })
        .collect();
    if max_lag + 1 >= acf.len() {
        return Err(FeatureError::TooShort {
            needed: max_lag + 2,
            got: n,
        });
    }

    let peak = acf[min_lag..=max_lag]
        .iter()
        .fold(f64::MIN, |m, &v| m.max(v));
    if peak < 1e-9 {
        return Ok(fallback);
    }

    let mut best: Option<(usize, f64)> = None;
    for lag in min_lag..=max_lag {
        let bpm = bpm_of_lag(lag as f64, env.hop_s);
        let octaves = (bpm / FALLBACK_BPM).log2() / PRIOR_OCTAVES;
        let prior = (-0.5 * octaves * octaves).exp();
        let score = (acf[lag - 1] + acf[lag] + acf[lag + 1]) * prior;
        best = match best {
            None => Some((lag, score)),
            Some((_, s)) if score > s => Some((lag, score)),
            Some((b, s)) if score == s => {
                let closer = (bpm - FALLBACK_BPM).abs()
                    < (bpm_of_lag(b as f64, env.hop_s) - FALLBACK_BPM).abs();
                Some(if closer { (lag, score) } else { (b, s) })
            }
            keep => keep,
        };
    }
    let (lag, _) = best.expect("non-empty lag range");
    let period = refine_period(&acf, lag);
    Ok(TempoEstimate {
        bpm: bpm_of_lag(period, env.hop_s),
        low_confidence: false,
    })
}

/// Sub-hop period estimate: the centroid of the positive autocorrelation
/// around the `m`-th harmonic, divided by `m`, for the largest usable `m`.
fn refine_period(acf: &[f64], lag: usize) -> f64 {
    let centroid = |center: usize| -> Option<f64> {
        let lo = center.checked_sub(1)?;
        let hi = center + 1;
        if hi >= acf.len() {
            return None;
        }
        let (mut wsum, mut tsum) = (0.0, 0.0);
        for (l, &v) in acf.iter().enumerate().take(hi + 1).skip(lo) {
            let w = v.max(0.0);
            wsum += w;
            tsum += w * l as f64;
        }
        (wsum > 0.0).then(|| tsum / wsum)
    };
    let mut period = centroid(lag).unwrap_or(lag as f64);
    let mut m = 2;
    while let Some(c) = centroid((m as f64 * period).round() as usize) {
        period = c / m as f64;
        m += 1;
    }
    period
}

/// Tempo plus beat positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatGrid {
    pub tempo_bpm: f64,
    pub beat_times_s: Vec<f64>,
    pub onset_envelope: Vec<f64>,
    pub low_confidence: bool,
}

impl BeatGrid {
    pub fn period_s(&self) -> f64 {
        60.0 / self.tempo_bpm
    }
}

/// Greedy beat tracking: seed at the strongest onset, then step one period at
/// a time in both directions, snapping each beat to the strongest onset within
/// ±15% of a period. Where the window holds no positive onset the beat stays
/// on the predicted position.
pub fn track_beats(env: &OnsetEnvelope, tempo: TempoEstimate) -> Result<BeatGrid, FeatureError> {
    if env.len() < 2 {
        return Err(FeatureError::TooShort {
            needed: 2,
            got: env.len(),
        });
    }
    let period_hops = 60.0 / (tempo.bpm * env.hop_s);
    let radius = SNAP_FRACTION * period_hops;
    // No extrapolation past the last envelope value: nothing after it can be
    // observed.
    let end_hops = (env.len() - 1) as f64;
    let start_hops = env.index_of(0.0);
    // Without any onset the grid starts at t = 0.
    let seed = strongest_onset(&env.values, 0, env.len() - 1, 0.0)
        .map_or(start_hops, |i| i as f64);

    let mut forward = vec![seed];
    let mut pos = seed;
    loop {
        let predicted = pos + period_hops;
        if predicted > end_hops {
            break;
        }
        pos = snap(env, predicted, radius);
        forward.push(pos);
    }
    let mut backward = Vec::new();
    pos = seed;
    loop {
        let predicted = pos - period_hops;
        if predicted < start_hops {
            break;
        }
        pos = snap(env, predicted, radius);
        backward.push(pos);
    }
    backward.reverse();

    let beat_times_s = backward
        .into_iter()
        .chain(forward)
        .map(|h| (env.offset_s + h * env.hop_s).clamp(0.0, env.duration_s))
        .fold(Vec::new(), |mut acc: Vec<f64>, t| {
            if acc.last().is_none_or(|&last| t > last) {
                acc.push(t);
            }
            acc
        });

    Ok(BeatGrid {
        tempo_bpm: tempo.bpm,
        beat_times_s,
        onset_envelope: env.values.clone(),
        low_confidence: tempo.low_confidence,
    })
}

fn snap(env: &OnsetEnvelope, predicted: f64, radius: f64) -> f64 {
    let last = env.len() as f64 - 1.0;
    let lo = (predicted - radius).ceil().max(0.0);
    let hi = (predicted + radius).floor().min(last);
    if lo > hi {
        return predicted;
    }
    strongest_onset(&env.values, lo as usize, hi as usize, predicted)
        .map_or(predicted, |i| i as f64)
}

/// Index of the largest strictly positive value in `values[lo..=hi]`; ties
/// go to the index nearest `target`, then the earliest.
fn strongest_onset(values: &[f64], lo: usize, hi: usize, target: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in lo..=hi {
        let v = values[i];
        if v <= 0.0 {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) if v > values[b] => Some(i),
            Some(b) if v == values[b] && (i as f64 - target).abs() < (b as f64 - target).abs() => {
                Some(i)
            }
            keep => keep,
        };
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn env_of(values: Vec<f64>) -> OnsetEnvelope {
        let duration_s = FRAME_LEN as f64 / f64::from(SAMPLE_RATE) + (values.len() - 1) as f64 * HOP_S;
        OnsetEnvelope {
            values,
            hop_s: HOP_S,
            offset_s: (FRAME_LEN - HOP_LEN) as f64 / f64::from(SAMPLE_RATE),
            duration_s,
        }
    }

    fn click_track(bpm: f64, secs: f64, first_s: f64) -> AudioBuffer {
        let n = (secs * f64::from(SAMPLE_RATE)) as usize;
        let mut s = vec![0.0; n];
        let mut t = first_s;
        while t < secs {
            let i = (t * f64::from(SAMPLE_RATE)).round() as usize;
            for (k, v) in s.iter_mut().skip(i).take(64).enumerate() {
                *v = 0.9 * (-(k as f64) / 8.0).exp();
            }
            t += 60.0 / bpm;
        }
        AudioBuffer::new(s, SAMPLE_RATE)
    }

    #[test]
    fn silence_has_flat_envelope_and_fallback_tempo() {
        let env = onset_envelope(&AudioBuffer::silence(10 * SAMPLE_RATE as usize, SAMPLE_RATE)).unwrap();
        assert!(env.values.iter().all(|&v| v == 0.0));
        let tempo = estimate_tempo(&env).unwrap();
        assert_eq!(tempo.bpm, FALLBACK_BPM);
        assert!(tempo.low_confidence);
        let grid = track_beats(&env, tempo).unwrap();
        for w in grid.beat_times_s.windows(2) {
            assert!((w[1] - w[0] - 0.5).abs() < 1e-9);
        }
        assert_eq!(grid.beat_times_s[0], 0.0);
    }

    #[test]
    fn single_click_peaks_at_click_time() {
        let mut s = vec![0.0; 3 * SAMPLE_RATE as usize];
        s[SAMPLE_RATE as usize] = 1.0;
        let env = onset_envelope(&AudioBuffer::new(s, SAMPLE_RATE)).unwrap();
        let argmax = strongest_onset(&env.values, 0, env.len() - 1, 0.0).unwrap();
        assert!((env.time_of(argmax) - 1.0).abs() <= HOP_S, "{}", env.time_of(argmax));
    }

    #[test]
    fn steady_sine_envelope_decays_after_onset() {
        let sr = f64::from(SAMPLE_RATE);
        let s: Vec<f64> = (0..(3.0 * sr) as usize)
            .map(|i| {
                if i < sr as usize / 2 {
                    0.0
                } else {
                    0.5 * (2.0 * PI * 440.0 * i as f64 / sr).sin()
                }
            })
            .collect();
        let env = onset_envelope(&AudioBuffer::new(s, SAMPLE_RATE)).unwrap();
        let peak = env.values.iter().cloned().fold(0.0, f64::max);
        let onset = env.values.iter().position(|&v| v == peak).unwrap();
        // Once the frame is entirely inside the tone.
        let settled = onset + FRAME_LEN / HOP_LEN + 1;
        for &v in &env.values[settled..] {
            assert!(v < 0.05 * peak, "{v} vs peak {peak}");
        }
    }

    #[test]
    fn click_tracks_recover_tempo() {
        for bpm in [60.0, 90.0, 120.0, 150.0] {
            let env = onset_envelope(&click_track(bpm, 10.0, 0.3)).unwrap();
            let est = estimate_tempo(&env).unwrap();
            assert!(!est.low_confidence);
            assert!((est.bpm - bpm).abs() <= 1.0, "{bpm}: got {}", est.bpm);
        }
    }

    #[test]
    fn sixty_bpm_grid_over_ten_seconds() {
        let env = onset_envelope(&click_track(60.0, 10.0, 0.25)).unwrap();
        let grid = track_beats(
            &env,
            TempoEstimate {
                bpm: 60.0,
                low_confidence: false,
            },
        )
        .unwrap();
        let n = grid.beat_times_s.len();
        assert!((9..=11).contains(&n), "{n} beats");
    }

    #[test]
    fn tempo_needs_four_seconds() {
        let env = env_of(vec![0.0; 50]);
        assert!(matches!(estimate_tempo(&env), Err(FeatureError::TooShort { .. })));
        let one = env_of(vec![0.0; 1]);
        assert!(matches!(track_beats(&one, TempoEstimate { bpm: 120.0, low_confidence: true }), Err(FeatureError::TooShort { .. })));
    }

    #[test]
    fn onset_needs_two_frames() {
        let buf = AudioBuffer::silence(FRAME_LEN, SAMPLE_RATE);
        assert!(matches!(onset_envelope(&buf), Err(FeatureError::TooShort { .. })));
    }
}
