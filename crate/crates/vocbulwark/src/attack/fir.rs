//! Linear-phase FIR design (Hamming-windowed sinc) and same-length filtering
//! with symmetric edge padding. Hamming sidelobes sit near -53 dB, which
//! clears the 40 dB stopband requirement with margin.

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Tap count for all designed filters; odd so the filter is symmetric around
/// an integer group delay.
pub const FIR_TAPS: usize = 231;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn check_cutoff(cutoff_hz: f64, sample_rate: u32) -> Result<()> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::Attack(format!(
            "cutoff {cutoff_hz} Hz outside (0, {nyquist}) for rate {sample_rate}"
        )));
    }
    Ok(())
}

/// Windowed-sinc lowpass, unity DC gain.
pub fn design_lowpass(cutoff_hz: f64, sample_rate: u32) -> Result<Vec<f64>> {
    check_cutoff(cutoff_hz, sample_rate)?;
    let fc = cutoff_hz / sample_rate as f64;
    let m = (FIR_TAPS - 1) as f64 / 2.0;
    let win = hamming(FIR_TAPS);
    let mut taps: Vec<f64> = (0..FIR_TAPS)
        .map(|i| 2.0 * fc * sinc(2.0 * fc * (i as f64 - m)) * win[i])
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Ok(taps)
}

/// Spectral inversion of the matching lowpass: unity gain at Nyquist, zero at
/// DC.
pub fn design_highpass(cutoff_hz: f64, sample_rate: u32) -> Result<Vec<f64>> {
    let lp = design_lowpass(cutoff_hz, sample_rate)?;
    let mut hp: Vec<f64> = lp.iter().map(|&t| -t).collect();
    hp[(FIR_TAPS - 1) / 2] += 1.0;
    Ok(hp)
}

/// Difference of two lowpass designs sharing the window.
pub fn design_bandpass(lo_hz: f64, hi_hz: f64, sample_rate: u32) -> Result<Vec<f64>> {
    if lo_hz >= hi_hz {
        return Err(Error::Attack(format!("bandpass: lo {lo_hz} must be below hi {hi_hz}")));
    }
    let lp_hi = design_lowpass(hi_hz, sample_rate)?;
    let lp_lo = design_lowpass(lo_hz, sample_rate)?;
    Ok(lp_hi.iter().zip(&lp_lo).map(|(h, l)| h - l).collect())
}

/// Same-length filtering: symmetric padding by half the kernel on each side,
/// then a valid correlation (taps are symmetric, so this is convolution).
pub fn filter_same(w: &Waveform, taps: &[f64]) -> Result<Waveform> {
    let half = (taps.len() - 1) / 2;
    if w.len() < half + 1 {
        return Err(Error::Attack(format!(
            "filter: input length {} too short for {} taps",
            w.len(),
            taps.len()
        )));
    }
    let t = w.len();
    let mut padded = Vec::with_capacity(t + 2 * half);
    for i in 0..half {
        padded.push(w.samples[half - 1 - i] as f64);
    }
    padded.extend(w.samples.iter().map(|&s| s as f64));
    for j in 0..half {
        padded.push(w.samples[t - 1 - j] as f64);
    }
    let mut out = vec![0.0f64; t];
    for (k, &tap) in taps.iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(&padded[k..k + t]) {
            *o += tap * x;
        }
    }
    Ok(Waveform { samples: out.into_iter().map(|v| v as f32).collect(), sample_rate: w.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, sr: u32) -> Waveform {
        let n = (secs * sr as f64) as usize;
        Waveform {
            samples: (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
                .collect(),
            sample_rate: sr,
        }
    }

    fn rms(w: &Waveform) -> f64 {
        w.power().sqrt()
    }

    #[test]
    fn lowpass_stopband_kills_high_tone() {
        let taps = design_lowpass(3000.0, 22_050).unwrap();
        let hi = tone(6000.0, 1.0, 22_050);
        let out = filter_same(&hi, &taps).unwrap();
        assert!(rms(&out) < 0.01 * rms(&hi), "stopband leak: {}", rms(&out) / rms(&hi));
    }

    #[test]
    fn lowpass_passband_preserves_low_tone() {
        let taps = design_lowpass(3000.0, 22_050).unwrap();
        let lo = tone(1000.0, 1.0, 22_050);
        let out = filter_same(&lo, &taps).unwrap();
        let ratio = rms(&out) / rms(&lo);
        assert!((ratio - 1.0).abs() < 0.05, "passband ratio {ratio}");
    }

    #[test]
    fn bandpass_approximates_lowpass_highpass_cascade() {
        let sr = 22_050;
        let bp = design_bandpass(300.0, 8000.0, sr).unwrap();
        // oracle: run the two halves in cascade
        let lp = design_lowpass(8000.0, sr).unwrap();
        let hp = design_highpass(300.0, sr).unwrap();
        let mut rng_state = 1u64;
        let noise: Vec<f32> = (0..22_050)
            .map(|_| {
                // xorshift keeps the oracle free of extra deps
                rng_state ^= rng_state << 13;
                rng_state ^= rng_state >> 7;
                rng_state ^= rng_state << 17;
                ((rng_state % 20_000) as f32 / 10_000.0) - 1.0
            })
            .collect();
        let w = Waveform { samples: noise, sample_rate: sr };
        let direct = filter_same(&w, &bp).unwrap();
        let cascade = filter_same(&filter_same(&w, &lp).unwrap(), &hp).unwrap();
        let err: f64 = direct
            .samples
            .iter()
            .zip(&cascade.samples)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / direct.len() as f64;
        assert!(err.sqrt() < 1e-3, "cascade mismatch rms {}", err.sqrt());
    }

    #[test]
    fn cutoff_outside_nyquist_rejected() {
        assert!(design_lowpass(12_000.0, 22_050).is_err());
        assert!(design_lowpass(0.0, 22_050).is_err());
        assert!(design_bandpass(500.0, 400.0, 22_050).is_err());
    }
}
