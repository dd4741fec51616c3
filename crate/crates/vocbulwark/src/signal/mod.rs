//! Audio I/O, segmentation, and time-frequency analysis.

mod mel;
mod resample;
mod stft;
pub mod synth;
mod wav;

pub use mel::{mel_filterbank, mel_transform, MelConfig, MelSpectrogram};
pub use resample::resample_linear;
pub use stft::{hann_periodic, stft, ComplexSpectrogram, StftConfig, Window};
pub use wav::{load_wav, save_wav};

use crate::error::{Error, Result};

/// Internal processing rate; corpus audio is resampled to this on ingestion.
pub const SAMPLE_RATE: u32 = 22_050;

/// Mono audio with an explicit sample rate. Amplitudes are nominally in
/// `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("waveform: sample_rate must be > 0".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Invalid("waveform: non-finite sample".into()));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean signal power.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / self.samples.len() as f64
    }
}

/// Split into non-overlapping clips of exactly `seconds * sample_rate`
/// samples; any trailing remainder is discarded.
pub fn segment(w: &Waveform, seconds: f64) -> Result<Vec<Waveform>> {
    if !(seconds > 0.0) {
        return Err(Error::Invalid("segment: seconds must be > 0".into()));
    }
    let clip_len = (seconds * w.sample_rate as f64).round() as usize;
    if clip_len == 0 {
        return Err(Error::Invalid("segment: clip length rounds to zero".into()));
    }
    Ok(w
        .samples
        .chunks_exact(clip_len)
        .map(|c| Waveform { samples: c.to_vec(), sample_rate: w.sample_rate })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, sr: u32) -> Waveform {
        Waveform { samples: (0..n).map(|i| (i as f32 / n as f32) - 0.5).collect(), sample_rate: sr }
    }

    #[test]
    fn segment_floors_clip_count() {
        let w = ramp(25_000, 10_000); // 2.5 s
        let clips = segment(&w, 1.0).unwrap();
        assert_eq!(clips.len(), 2);
        assert!(clips.iter().all(|c| c.len() == 10_000));
    }

    #[test]
    fn segment_exact_fit_is_identity() {
        let w = ramp(8_000, 8_000);
        let clips = segment(&w, 1.0).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].samples, w.samples);
    }

    #[test]
    fn segment_short_input_yields_nothing() {
        let w = ramp(4_000, 8_000); // 0.5 s
        assert!(segment(&w, 1.0).unwrap().is_empty());
    }

    #[test]
    fn segment_concat_is_prefix_of_input() {
        let w = ramp(10_500, 4_000);
        let clips = segment(&w, 1.0).unwrap();
        let rebuilt: Vec<f32> = clips.iter().flat_map(|c| c.samples.iter().copied()).collect();
        assert_eq!(&w.samples[..rebuilt.len()], rebuilt.as_slice());
    }

    #[test]
    fn invalid_waveforms_rejected() {
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![f32::INFINITY], 22_050).is_err());
    }
}
