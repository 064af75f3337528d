use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::audio::AudioBuffer;

const WINDOW_S: f64 = 0.1;
const MIN_AUDIO_S: f64 = 0.05;
const F0_MIN: f64 = 50.0;
const F0_MAX: f64 = 2000.0;
const VOICED_THRESHOLD: f64 = 0.3;
/// The earliest local peak within this fraction of the best one wins, which
/// keeps period multiples from beating the fundamental.
const PEAK_TOLERANCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchEstimate {
    /// `None` when unvoiced.
    pub f0_hz: Option<f64>,
    pub confidence: f64,
}

impl PitchEstimate {
    pub fn is_voiced(&self) -> bool {
        self.f0_hz.is_some()
    }
}

/// Normalized autocorrelation pitch over the centre 100 ms of the buffer.
pub fn estimate_pitch(buf: &AudioBuffer) -> Result<PitchEstimate, FeatureError> {
    let rate = f64::from(buf.sample_rate());
    let min_len = (MIN_AUDIO_S * rate).ceil() as usize;
    if buf.len() < min_len {
        return Err(FeatureError::TooShort {
            needed: min_len,
            got: buf.len(),
        });
    }
    let win = ((WINDOW_S * rate).round() as usize).min(buf.len());
    let start = (buf.len() - win) / 2;
    let x = &buf.samples()[start..start + win];

    let min_lag = (rate / F0_MAX).ceil() as usize;
    let max_lag = ((rate / F0_MIN).floor() as usize).min(win - 2);
    let nacf = |lag: usize| -> f64 {
        let (a, b) = (&x[..win - lag], &x[lag..]);
        let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
        let ea: f64 = a.iter().map(|v| v * v).sum();
        let eb: f64 = b.iter().map(|v| v * v).sum();
        let denom = (ea * eb).sqrt();
        if denom > 1e-12 {
            dot / denom
        } else {
            0.0
        }
    };
    // One extra lag either side for the peak test and interpolation.
    let lo = min_lag.saturating_sub(1).max(1);
    let values: Vec<f64> = (lo..=max_lag + 1).map(nacf).collect();
    let at = |lag: usize| values[lag - lo];

    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| at(l) > 0.0 && at(l) >= at(l - 1) && at(l) >= at(l + 1))
        .collect();
    let best = peaks.iter().map(|&l| at(l)).fold(0.0, f64::max);
    let unvoiced = PitchEstimate {
        f0_hz: None,
        confidence: best.clamp(0.0, 1.0),
    };
    if best < VOICED_THRESHOLD {
        return Ok(unvoiced);
    }
    let lag = peaks
        .into_iter()
        .find(|&l| at(l) >= PEAK_TOLERANCE * best)
        .expect("best peak qualifies");

    let (y0, y1, y2) = (at(lag - 1), at(lag), at(lag + 1));
    let curvature = y0 - 2.0 * y1 + y2;
    let offset = if curvature < 0.0 {
        (0.5 * (y0 - y2) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let f0 = (rate / (lag as f64 + offset)).clamp(F0_MIN, F0_MAX);
    Ok(PitchEstimate {
        f0_hz: Some(f0),
        confidence: y1.clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn tone(freq: f64) -> AudioBuffer {
        let sr = f64::from(SAMPLE_RATE);
        AudioBuffer::new(
            (0..SAMPLE_RATE as usize / 2)
                .map(|i| 0.6 * (2.0 * PI * freq * i as f64 / sr).sin())
                .collect(),
            SAMPLE_RATE,
        )
    }

    #[test]
    fn sine_440() {
        let p = estimate_pitch(&tone(440.0)).unwrap();
        let f0 = p.f0_hz.unwrap();
        assert!((f0 - 440.0).abs() <= 2.0, "{f0}");
        assert!(p.confidence > 0.9);
    }

    #[test]
    fn low_and_high_tones() {
        for f in [82.4, 196.0, 1318.5] {
            let f0 = estimate_pitch(&tone(f)).unwrap().f0_hz.unwrap();
            assert!((f0 - f).abs() / f < 0.01, "{f}: {f0}");
        }
    }

    #[test]
    fn noise_and_silence_are_unvoiced() {
        let mut rng = StdRng::seed_from_u64(7);
        let noise = AudioBuffer::new(
            (0..SAMPLE_RATE as usize).map(|_| rng.random_range(-0.5..0.5)).collect(),
            SAMPLE_RATE,
        );
        assert!(!estimate_pitch(&noise).unwrap().is_voiced());
        let silence = AudioBuffer::silence(SAMPLE_RATE as usize, SAMPLE_RATE);
        assert!(!estimate_pitch(&silence).unwrap().is_voiced());
    }

    #[test]
    fn short_input() {
        let short = AudioBuffer::silence(1000, SAMPLE_RATE);
        assert!(matches!(estimate_pitch(&short), Err(FeatureError::TooShort { .. })));
        // 60 ms is enough even though it is shorter than the analysis window.
        let ok = AudioBuffer::silence(1323, SAMPLE_RATE);
        assert!(estimate_pitch(&ok).is_ok());
    }
}
