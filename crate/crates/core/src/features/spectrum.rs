use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{
    check_canonical, frame_count, FeatureError, MfccMatrix, FRAME_LEN, HOP_LEN, LOG_FLOOR,
    N_BINS, N_MELS, N_MFCC,
};
use crate::audio::{AudioBuffer, SAMPLE_RATE};

pub const MEL_F_MIN: f64 = 0.0;
pub const MEL_F_MAX: f64 = SAMPLE_RATE as f64 / 2.0;

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Triangular mel filters, one row per band over the `N_BINS` rfft bins.
/// Each row is area-normalized to sum to 1.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    rows: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, f_min: f64, f_max: f64) -> Self {
        let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = f64::from(SAMPLE_RATE) / FRAME_LEN as f64;
        let rows = edges
            .windows(3)
            .map(|w| {
                let (lo, center, hi) = (w[0], w[1], w[2]);
                let mut row: Vec<f64> = (0..N_BINS)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let rising = (f - lo) / (center - lo);
                        let falling = (hi - f) / (hi - center);
                        rising.min(falling).max(0.0)
                    })
                    .collect();
                let area: f64 = row.iter().sum();
                if area > 0.0 {
                    row.iter_mut().for_each(|v| *v /= area);
                }
                row
            })
            .collect();
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

/// The engine's filterbank: 26 bands over 0..11025 Hz.
pub fn mel_filterbank() -> MelFilterbank {
    MelFilterbank::new(N_MELS, MEL_F_MIN, MEL_F_MAX)
}

/// Shared FFT plan, window, filterbank and DCT table.
struct Analyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    dct: Vec<[f64; N_MELS]>,
}

impl Analyzer {
    fn get() -> &'static Analyzer {
        static ANALYZER: OnceLock<Analyzer> = OnceLock::new();
        ANALYZER.get_or_init(|| {
            let fft = FftPlanner::new().plan_fft_forward(FRAME_LEN);
            Analyzer {
                fft,
                window: hann_window(FRAME_LEN),
                filterbank: mel_filterbank(),
                dct: dct_ii_orthonormal(),
            }
        })
    }

    /// Calls `f(frame_index, power_row)` for every full frame.
    fn for_each_power_frame(&self, samples: &[f64], mut f: impl FnMut(usize, &[f64])) {
        let mut buf = vec![Complex::new(0.0, 0.0); FRAME_LEN];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; N_BINS];
        for r in 0..frame_count(samples.len()) {
            let frame = &samples[r * HOP_LEN..r * HOP_LEN + FRAME_LEN];
            for ((c, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
                *c = Complex::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            f(r, &power);
        }
    }
}

/// Orthonormal DCT-II basis rows for the first `N_MFCC` coefficients.
fn dct_ii_orthonormal() -> Vec<[f64; N_MELS]> {
    let m = N_MELS as f64;
    (0..N_MFCC)
        .map(|j| {
            let scale = if j == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            let mut row = [0.0; N_MELS];
            for (i, v) in row.iter_mut().enumerate() {
                *v = scale * (PI * j as f64 * (i as f64 + 0.5) / m).cos();
            }
            row
        })
        .collect()
}

/// Per-frame power spectra `|DFT(hann · frame)|²`, bins 0..=1024.
pub fn stft_power(buf: &AudioBuffer) -> Result<Vec<Vec<f64>>, FeatureError> {
    check_canonical(buf)?;
    if buf.len() < FRAME_LEN {
        return Err(FeatureError::TooShort {
            needed: FRAME_LEN,
            got: buf.len(),
        });
    }
    let mut rows = Vec::with_capacity(frame_count(buf.len()));
    Analyzer::get().for_each_power_frame(buf.samples(), |_, p| rows.push(p.to_vec()));
    Ok(rows)
}

/// Floored natural-log mel energies per frame.
pub fn log_mel(buf: &AudioBuffer) -> Result<Vec<[f64; N_MELS]>, FeatureError> {
    check_canonical(buf)?;
    if buf.len() < FRAME_LEN {
        return Err(FeatureError::TooShort {
            needed: FRAME_LEN,
            got: buf.len(),
        });
    }
    let analyzer = Analyzer::get();
    let mut out = Vec::with_capacity(frame_count(buf.len()));
    let mut energies = [0.0; N_MELS];
    analyzer.for_each_power_frame(buf.samples(), |_, power| {
        analyzer.filterbank.apply(power, &mut energies);
        out.push(energies.map(|e| e.max(LOG_FLOOR).ln()));
    });
    Ok(out)
}

/// DCT-II (orthonormal) of log-mel frames, first 13 coefficients.
pub fn mfcc_from_log_mel(log_mel: &[[f64; N_MELS]]) -> MfccMatrix {
    let dct = &Analyzer::get().dct;
    let frames = log_mel
        .iter()
        .map(|bands| {
            let mut c = [0.0; N_MFCC];
            for (cj, basis) in c.iter_mut().zip(dct) {
                *cj = basis.iter().zip(bands).map(|(b, x)| b * x).sum();
            }
            c
        })
        .collect();
    MfccMatrix::from_frames(frames)
}

pub fn mfcc(buf: &AudioBuffer) -> Result<MfccMatrix, FeatureError> {
    Ok(mfcc_from_log_mel(&log_mel(buf)?))
}
