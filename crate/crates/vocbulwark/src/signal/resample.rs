//! Linear-interpolation resampling.

use super::Waveform;

/// Resample to `target_rate` by linear interpolation. Adequate for corpus
/// ingestion at desk scale; not a band-limited resampler.
pub fn resample_linear(w: &Waveform, target_rate: u32) -> Waveform {
    if w.sample_rate == target_rate || w.is_empty() {
        return Waveform { samples: w.samples.clone(), sample_rate: target_rate };
    }
    let ratio = w.sample_rate as f64 / target_rate as f64;
    let out_len = ((w.len() as f64 / ratio).round() as usize).max(1);
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = (pos.floor() as usize).min(w.len() - 1);
            let i1 = (i0 + 1).min(w.len() - 1);
            let frac = (pos - i0 as f64) as f32;
            w.samples[i0] * (1.0 - frac) + w.samples[i1] * frac
        })
        .collect();
    Waveform { samples, sample_rate: target_rate }
}
