//! Short-time Fourier analysis (plain, non-differentiable path).
//!
//! Frames are laid out without implicit padding: `frames = (L - win)/hop + 1`.
//! Callers wanting centered analysis pad beforehand (see `mel_transform`).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Waveform;

/// Named analysis taper.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Window {
    #[default]
    Hann,
}

impl Window {
    pub fn taps(self, n: usize) -> Vec<f32> {
        match self {
            Window::Hann => hann_periodic(n),
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .map(|v| v as f32)
        .collect()
}

/// Per-scale analysis settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub win: usize,
    pub window: Window,
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize, win: usize) -> Result<Self> {
        let cfg = StftConfig { fft_size, hop, win, window: Window::Hann };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.win == 0 || self.fft_size == 0 {
            return Err(Error::Invalid("stft config: all sizes must be > 0".into()));
        }
        if !(self.hop <= self.win && self.win <= self.fft_size) {
            return Err(Error::Invalid(format!(
                "stft config: need hop <= win <= fft_size, got {}/{}/{}",
                self.hop, self.win, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// Complex spectrogram, `bins x frames`, bin-major.
#[derive(Clone, Debug)]
pub struct ComplexSpectrogram {
    data: Vec<Complex<f32>>,
    pub bins: usize,
    pub frames: usize,
}

impl ComplexSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> Complex<f32> {
        self.data[bin * self.frames + frame]
    }

    pub fn magnitudes(&self) -> Vec<f32> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    pub fn power(&self) -> Vec<f32> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Windowed, hop-advanced DFT frames of `w`.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if w.len() < cfg.win {
        return Err(Error::Invalid(format!(
            "stft: input length {} shorter than window {}",
            w.len(),
            cfg.win
        )));
    }
    let frames = (w.len() - cfg.win) / cfg.hop + 1;
    let bins = cfg.bins();
    let window = cfg.window.taps(cfg.win);
    let fft = FftPlanner::<f32>::new().plan_fft_forward(cfg.fft_size);

    let mut data = vec![Complex::new(0.0, 0.0); bins * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for f in 0..frames {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = if j < cfg.win {
                Complex::new(w.samples[f * cfg.hop + j] * window[j], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for k in 0..bins {
            data[k * frames + f] = buf[k];
        }
    }
    Ok(ComplexSpectrogram { data, bins, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize, sr: u32) -> Waveform {
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
            .collect();
        Waveform { samples, sample_rate: sr }
    }

    #[test]
    fn zero_signal_gives_zero_matrix() {
        let w = Waveform { samples: vec![0.0; 4096], sample_rate: 22_050 };
        let cfg = StftConfig::new(1024, 256, 1024).unwrap();
        let s = stft(&w, &cfg).unwrap();
        assert!(s.power().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bin_centered_sine_peaks_at_its_bin() {
        let sr = 22_050;
        let cfg = StftConfig::new(1024, 256, 1024).unwrap();
        let k = 40;
        let freq = k as f64 * sr as f64 / cfg.fft_size as f64;
        let w = tone(freq, 4096, sr);
        let s = stft(&w, &cfg).unwrap();
        for f in 0..s.frames {
            let peak = (0..s.bins)
                .max_by(|&a, &b| s.at(a, f).norm().partial_cmp(&s.at(b, f).norm()).unwrap())
                .unwrap();
            assert_eq!(peak, k);
        }
    }

    #[test]
    fn parseval_per_frame_energy_matches_time_domain() {
        // DFT energy identity per frame: sum|X|^2 over all fft bins equals
        // fft_size * windowed-frame energy. The oracle computes the frame
        // energy directly in the time domain.
        let sr = 22_050;
        let cfg = StftConfig::new(256, 64, 256).unwrap();
        let w = tone(777.0, 2048, sr);
        let s = stft(&w, &cfg).unwrap();
        let window = hann_periodic(cfg.win);
        for f in 0..s.frames {
            let time_energy: f64 = (0..cfg.win)
                .map(|j| {
                    let v = (w.samples[f * cfg.hop + j] * window[j]) as f64;
                    v * v
                })
                .sum();
            // bins hold the lower half; reconstruct the full-spectrum sum via
            // Hermitian symmetry (interior bins count twice)
            let mut spec_energy = 0.0f64;
            for k in 0..s.bins {
                let m = s.at(k, f).norm_sqr() as f64;
                let double = k != 0 && !(cfg.fft_size % 2 == 0 && k == cfg.fft_size / 2);
                spec_energy += if double { 2.0 * m } else { m };
            }
            spec_energy /= cfg.fft_size as f64;
            let rel = (spec_energy - time_energy).abs() / time_energy.max(1e-12);
            assert!(rel < 1e-6, "frame {f}: {spec_energy} vs {time_energy}");
        }
    }

    #[test]
    fn stft_is_linear_in_amplitude() {
        let sr = 22_050;
        let cfg = StftConfig::new(512, 128, 512).unwrap();
        let w = tone(991.0, 3000, sr);
        let scaled = Waveform {
            samples: w.samples.iter().map(|&s| 2.5 * s).collect(),
            sample_rate: sr,
        };
        let a = stft(&w, &cfg).unwrap();
        let b = stft(&scaled, &cfg).unwrap();
        // relative to the spectrogram scale: per-cell relative error is
        // ill-conditioned on near-zero off-peak cells in f32
        let scale = a.magnitudes().iter().fold(0.0f32, |m, &v| m.max(v)) * 2.5;
        for k in 0..a.bins {
            for f in 0..a.frames {
                let lhs = b.at(k, f);
                let rhs = a.at(k, f) * 2.5;
                assert!((lhs - rhs).norm() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn too_short_input_rejected() {
        let w = Waveform { samples: vec![0.1; 100], sample_rate: 22_050 };
        let cfg = StftConfig::new(1024, 256, 1024).unwrap();
        assert!(stft(&w, &cfg).is_err());
    }
}
