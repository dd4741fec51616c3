//! Mel spectrograms: HTK-scale triangular filterbank over the power
//! spectrogram, with reflect padding so that `frames = ceil(len / hop)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::stft::{stft, StftConfig};
use super::Waveform;

/// Analysis settings for the mel front end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub mel_bins: usize,
    pub stft: StftConfig,
    /// Floor added inside log compression wherever log-mel values are formed.
    pub log_eps: f32,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            mel_bins: 64,
            stft: StftConfig::new(1024, 256, 1024).expect("default stft config"),
            log_eps: 1e-5,
        }
    }
}

/// Power-scale mel spectrogram, `mel_bins x frames` (bin-major).
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f32>,
    pub mel_bins: usize,
    pub frames: usize,
    pub config: StftConfig,
}

impl MelSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> f32 {
        self.values[bin * self.frames + frame]
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filterbank on the HTK mel scale, row-major
/// `mel_bins x (fft_size/2 + 1)`, spanning 0 Hz to Nyquist.
pub fn mel_filterbank(mel_bins: usize, fft_size: usize, sample_rate: u32) -> Vec<f64> {
    let bins = fft_size / 2 + 1;
    let m_lo = hz_to_mel(0.0);
    let m_hi = hz_to_mel(sample_rate as f64 / 2.0);
    let centers: Vec<f64> = (0..mel_bins + 2)
        .map(|j| mel_to_hz(m_lo + (m_hi - m_lo) * j as f64 / (mel_bins + 1) as f64))
        .collect();
    let mut fb = vec![0.0f64; mel_bins * bins];
    for i in 0..mel_bins {
        let (f_lo, f_c, f_hi) = (centers[i], centers[i + 1], centers[i + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let rise = (f - f_lo) / (f_c - f_lo);
            let fall = (f_hi - f) / (f_hi - f_c);
            fb[i * bins + k] = rise.min(fall).max(0.0);
        }
    }
    fb
}

/// Padding that yields `ceil(len / hop)` centered frames: `win/2` on the left
/// and whatever remains on the right.
pub fn centered_pad(len: usize, win: usize, hop: usize) -> (usize, usize) {
    let frames = len.div_ceil(hop);
    let needed = (frames - 1) * hop + win;
    let left = win / 2;
    (left, needed - len - left)
}

fn reflect_pad(x: &[f32], left: usize, right: usize) -> Vec<f32> {
    let t = x.len();
    debug_assert!(left < t && right < t, "reflect pad larger than signal");
    let mut out = Vec::with_capacity(left + t + right);
    for i in 0..left {
        out.push(x[left - i]);
    }
    out.extend_from_slice(x);
    for j in 0..right {
        out.push(x[t - 2 - j]);
    }
    out
}

/// Project the power spectrogram of `w` through the mel filterbank.
pub fn mel_transform(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    cfg.stft.validate()?;
    if w.len() < cfg.stft.win {
        return Err(Error::Invalid(format!(
            "mel_transform: input length {} shorter than window {}",
            w.len(),
            cfg.stft.win
        )));
    }
    let (left, right) = centered_pad(w.len(), cfg.stft.win, cfg.stft.hop);
    let padded = Waveform {
        samples: reflect_pad(&w.samples, left, right),
        sample_rate: w.sample_rate,
    };
    let spec = stft(&padded, &cfg.stft)?;
    let power = spec.power();
    let bins = cfg.stft.bins();
    let fb = mel_filterbank(cfg.mel_bins, cfg.stft.fft_size, w.sample_rate);

    let frames = spec.frames;
    let mut values = vec![0.0f32; cfg.mel_bins * frames];
    for m in 0..cfg.mel_bins {
        for k in 0..bins {
            let coef = fb[m * bins + k] as f32;
            if coef != 0.0 {
                let row = &power[k * frames..(k + 1) * frames];
                let dst = &mut values[m * frames..(m + 1) * frames];
                for (o, &p) in dst.iter_mut().zip(row) {
                    *o += coef * p;
                }
            }
        }
    }
    Ok(MelSpectrogram { values, mel_bins: cfg.mel_bins, frames, config: cfg.stft })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_signal_gives_zero_mel() {
        let w = Waveform { samples: vec![0.0; 22_050], sample_rate: 22_050 };
        let mel = mel_transform(&w, &MelConfig::default()).unwrap();
        assert!(mel.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_is_ceil_len_over_hop() {
        let cfg = MelConfig::default();
        for len in [22_050usize, 22_272, 4096, 1024] {
            let w = Waveform { samples: vec![0.01; len], sample_rate: 22_050 };
            let mel = mel_transform(&w, &cfg).unwrap();
            assert_eq!(mel.frames, len.div_ceil(cfg.stft.hop), "len {len}");
        }
    }

    #[test]
    fn white_noise_lights_every_mel_bin() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f32> = (0..22_050).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w = Waveform { samples, sample_rate: 22_050 };
        let mel = mel_transform(&w, &MelConfig::default()).unwrap();
        assert!(mel.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn sign_flip_leaves_mel_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f32> = (0..8192).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let flipped: Vec<f32> = samples.iter().map(|&s| -s).collect();
        let sr = 22_050;
        let cfg = MelConfig::default();
        let a = mel_transform(&Waveform { samples, sample_rate: sr }, &cfg).unwrap();
        let b = mel_transform(&Waveform { samples: flipped, sample_rate: sr }, &cfg).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            let denom = x.abs().max(1e-9);
            assert!((x - y).abs() / denom < 1e-4);
        }
    }

    #[test]
    fn filterbank_matches_independent_construction() {
        // oracle: rebuild each triangle pointwise from the mel-scale formula
        // with scalar arithmetic and compare row sums
        let (mel_bins, fft, sr) = (64usize, 1024usize, 22_050u32);
        let fb = mel_filterbank(mel_bins, fft, sr);
        let bins = fft / 2 + 1;

        let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
        let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let top = mel(sr as f64 / 2.0);
        for i in 0..mel_bins {
            let f_lo = inv(top * i as f64 / (mel_bins + 1) as f64);
            let f_c = inv(top * (i + 1) as f64 / (mel_bins + 1) as f64);
            let f_hi = inv(top * (i + 2) as f64 / (mel_bins + 1) as f64);
            let mut oracle_sum = 0.0f64;
            for k in 0..bins {
                let f = k as f64 * sr as f64 / fft as f64;
                let w = if f <= f_lo || f >= f_hi {
                    0.0
                } else if f <= f_c {
                    (f - f_lo) / (f_c - f_lo)
                } else {
                    (f_hi - f) / (f_hi - f_c)
                };
                oracle_sum += w;
            }
            let row_sum: f64 = fb[i * bins..(i + 1) * bins].iter().sum();
            assert!((row_sum - oracle_sum).abs() < 1e-6, "row {i}: {row_sum} vs {oracle_sum}");
        }
    }
}
