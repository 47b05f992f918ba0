use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::EncodedSequence;
use crate::error::{ensure, Result};

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub n_mels: usize,
    pub hop: usize,
    pub window: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            hop: 64,
            window: 128,
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Peak frequencies (Hz) of the triangular filters.
pub fn mel_band_centers(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (1..=n_mels).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect()
}

/// `[n_mels][n_fft / 2 + 1]` triangular weights spanning 0 Hz to Nyquist.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect();
    let bins = n_fft / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / n_fft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Log Mel spectrogram of a linear-amplitude signal, one row per frame.
/// Yields `floor((T - window) / hop) + 1` frames, none when `T < window`.
pub fn mel_spectrogram(signal: &[f64], sample_rate: u32, cfg: &MelConfig) -> Result<Vec<Vec<f64>>> {
    let n = cfg.window;
    ensure!(n.is_power_of_two(), "window {n} is not a power of two");
    ensure!(cfg.hop >= 1 && n >= cfg.hop, "need 1 <= hop <= window, got hop {} window {n}", cfg.hop);
    ensure!(cfg.n_mels >= 1, "need at least one Mel band");
    if signal.len() < n {
        return Ok(Vec::new());
    }
    let frames = (signal.len() - n) / cfg.hop + 1;
    let hann: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let bank = mel_filterbank(cfg.n_mels, n, sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let chunk = &signal[f * cfg.hop..f * cfg.hop + n];
        for (b, (x, w)) in buf.iter_mut().zip(chunk.iter().zip(&hann)) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        out.push(
            bank.iter()
                .map(|filt| (filt.iter().zip(&power).map(|(a, b)| a * b).sum::<f64>() + LOG_FLOOR).ln())
                .collect(),
        );
    }
    Ok(out)
}

/// [`mel_spectrogram`] of a sequence decoded to linear amplitude.
pub fn mel_frontend(seq: &EncodedSequence, cfg: &MelConfig) -> Result<Vec<Vec<f64>>> {
    mel_spectrogram(&seq.to_linear()?, seq.sample_rate, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count() {
        let cfg = MelConfig::default();
        for t in [128, 129, 191, 192, 1000] {
            let m = mel_spectrogram(&vec![0.1; t], 16000, &cfg).unwrap();
            assert_eq!(m.len(), (t - 128) / 64 + 1, "T={t}");
            assert!(m.iter().all(|r| r.len() == 80));
        }
        assert!(mel_spectrogram(&[0.0; 100], 16000, &cfg).unwrap().is_empty());
    }

    #[test]
    fn silence_hits_the_floor() {
        let m = mel_spectrogram(&[0.0; 512], 16000, &MelConfig::default()).unwrap();
        assert!(m.iter().flatten().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn non_power_of_two_window_rejected() {
        let cfg = MelConfig {
            window: 100,
            ..MelConfig::default()
        };
        assert!(matches!(mel_spectrogram(&[0.0; 512], 16000, &cfg), Err(crate::Error::Contract(_))));
        let cfg = MelConfig {
            hop: 256,
            ..MelConfig::default()
        };
        assert!(mel_spectrogram(&[0.0; 512], 16000, &cfg).is_err());
    }

    #[test]
    fn tone_at_band_center_peaks_there() {
        let sr = 16000;
        let centers = mel_band_centers(80, sr);
        for band in [50, 62, 70, 78] {
            let f = centers[band];
            let x: Vec<f64> = (0..2048).map(|i| (2.0 * PI * f * i as f64 / sr as f64).sin()).collect();
            let m = mel_spectrogram(&x, sr, &MelConfig::default()).unwrap();
            for row in &m {
                let arg = (0..80).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                assert_eq!(arg, band, "tone at {f:.1} Hz");
            }
        }
    }

    #[test]
    fn filters_peak_at_centers() {
        let bank = mel_filterbank(10, 4096, 16000);
        let centers = mel_band_centers(10, 16000);
        for (filt, c) in bank.iter().zip(centers) {
            let k = (c * 4096.0 / 16000.0).round() as usize;
            assert!(filt[k] > 0.99, "{}", filt[k]);
        }
    }
}
