//! Individual distortion operations, plain (non-differentiable-path)
//! implementations.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::signal::{resample_linear, Waveform};

/// Quantization step tied to the LSB of 16-bit PCM.
pub const DITHER_Q: f64 = 1.0 / 32768.0;

const MU: f64 = 255.0;

pub(crate) fn white_gaussian<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Scale factor that makes `noise` hit the target SNR against `signal_power`
/// exactly.
pub(crate) fn snr_scale(signal_power: f64, raw_noise_power: f64, snr_db: f64) -> f64 {
    let target = signal_power / 10f64.powf(snr_db / 10.0);
    (target / raw_noise_power.max(1e-300)).sqrt()
}

/// Additive white Gaussian noise at an exact realized SNR. A silent input is
/// returned unchanged with the flag set.
pub fn gaussian_noise<R: Rng>(w: &Waveform, snr_db: f64, rng: &mut R) -> (Waveform, bool) {
    let p = w.power();
    if p <= 0.0 {
        return (w.clone(), true);
    }
    let noise = white_gaussian(w.len(), rng);
    let raw = noise.iter().map(|&n| n * n).sum::<f64>() / noise.len() as f64;
    let scale = snr_scale(p, raw, snr_db);
    let samples = w
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &n)| (s as f64 + scale * n) as f32)
        .collect();
    (Waveform { samples, sample_rate: w.sample_rate }, false)
}

/// 1/f-shaped noise normalized to an exact standard deviation.
pub(crate) fn pink_vec<R: Rng>(len: usize, std: f64, rng: &mut R) -> Vec<f64> {
    use rustfft::{num_complex::Complex, FftPlanner};
    if std == 0.0 || len < 2 {
        return vec![0.0; len];
    }
    let mut spec = vec![Complex::new(0.0f64, 0.0); len];
    for k in 1..=len / 2 {
        let mag = 1.0 / (k as f64).sqrt();
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let c = Complex::from_polar(mag, phase);
        spec[k] = c;
        if k != len - k {
            spec[len - k] = c.conj();
        } else {
            spec[k] = Complex::new(mag, 0.0); // nyquist must stay real
        }
    }
    FftPlanner::<f64>::new().plan_fft_inverse(len).process(&mut spec);
    let mut v: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let mean = v.iter().sum::<f64>() / len as f64;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / len as f64;
    let scale = std / var.sqrt().max(1e-300);
    for x in &mut v {
        *x = (*x - mean) * scale;
    }
    v
}

pub fn pink_noise<R: Rng>(w: &Waveform, std: f64, rng: &mut R) -> Waveform {
    let noise = pink_vec(w.len(), std, rng);
    let samples = w
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &n)| (s as f64 + n) as f32)
        .collect();
    Waveform { samples, sample_rate: w.sample_rate }
}

/// Where a suppression lands: one contiguous span at the front, middle, or
/// back, chosen uniformly.
pub(crate) fn suppression_span<R: Rng>(len: usize, span: f64, rng: &mut R) -> (usize, usize) {
    let slen = ((len as f64) * span).floor() as usize;
    let start = match rng.gen_range(0..3u8) {
        0 => 0,
        1 => (len - slen) / 2,
        _ => len - slen,
    };
    (start, slen)
}

pub fn suppression<R: Rng>(w: &Waveform, span: f64, rng: &mut R) -> Waveform {
    let (start, slen) = suppression_span(w.len(), span, rng);
    let mut samples = w.samples.clone();
    for s in &mut samples[start..start + slen] {
        *s = 0.0;
    }
    Waveform { samples, sample_rate: w.sample_rate }
}

/// Triangular dither: sum of two uniforms over ±q/2, support ±q.
pub(crate) fn tpdf_vec<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len)
        .map(|_| rng.gen_range(-DITHER_Q / 2.0..DITHER_Q / 2.0) + rng.gen_range(-DITHER_Q / 2.0..DITHER_Q / 2.0))
        .collect()
}

pub fn dither_tpdf<R: Rng>(w: &Waveform, rng: &mut R) -> Waveform {
    let noise = tpdf_vec(w.len(), rng);
    let samples = w
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &n)| (s as f64 + n) as f32)
        .collect();
    Waveform { samples, sample_rate: w.sample_rate }
}

/// Single reflection: `y[t] = x[t] + decay * x[t - delay]`. A delay at or
/// beyond the clip length degrades to the identity.
pub fn echo(w: &Waveform, delay_ms: f64, decay: f64) -> Result<Waveform> {
    if !(0.0..1.0).contains(&decay) {
        return Err(Error::Attack(format!("echo decay {decay} outside [0, 1)")));
    }
    let delay = ((delay_ms / 1000.0) * w.sample_rate as f64).round() as usize;
    let mut samples = w.samples.clone();
    if decay > 0.0 && delay < w.len() {
        for t in delay..w.len() {
            samples[t] += decay as f32 * w.samples[t - delay];
        }
    }
    Ok(Waveform { samples, sample_rate: w.sample_rate })
}

pub fn amplitude_scale(w: &Waveform, factor: f64) -> Result<Waveform> {
    if factor <= 0.0 {
        return Err(Error::Attack(format!("amplitude factor {factor} must be > 0")));
    }
    let samples = w
        .samples
        .iter()
        .map(|&s| ((s as f64 * factor) as f32).clamp(-1.0, 1.0))
        .collect();
    Ok(Waveform { samples, sample_rate: w.sample_rate })
}

/// Which end a crop removes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropPosition {
    Front,
    Behind,
}

pub fn crop(w: &Waveform, ratio: f64, position: CropPosition) -> Result<Waveform> {
    if !(0.0..1.0).contains(&ratio) || ratio == 0.0 {
        return Err(Error::Attack(format!("crop ratio {ratio} outside (0, 1)")));
    }
    let cut = ((w.len() as f64) * ratio).floor() as usize;
    let samples = match position {
        CropPosition::Front => w.samples[cut..].to_vec(),
        CropPosition::Behind => w.samples[..w.len() - cut].to_vec(),
    };
    Ok(Waveform { samples, sample_rate: w.sample_rate })
}

fn mu_compand(x: f64) -> f64 {
    x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln()
}

fn mu_expand(y: f64) -> f64 {
    y.signum() * ((1.0 + MU).powf(y.abs()) - 1.0) / MU
}

/// Codec stand-in: mu-law companding, uniform quantization to `2^bits`
/// levels, optional down/up resampling in the companded domain, expansion.
pub(crate) fn codec_proxy_vec(xs: &[f32], bits: u32, down_factor: u32) -> Vec<f32> {
    let levels = (1u64 << bits) as f64 - 1.0;
    let mut companded: Vec<f32> = xs
        .iter()
        .map(|&x| {
            let y = mu_compand((x as f64).clamp(-1.0, 1.0));
            let q = ((y + 1.0) / 2.0 * levels).round() / levels * 2.0 - 1.0;
            q as f32
        })
        .collect();
    if down_factor > 1 {
        let w = Waveform { samples: companded, sample_rate: down_factor * 1000 };
        let down = resample_linear(&w, 1000);
        let mut up = resample_linear(&down, down_factor * 1000);
        up.samples.resize(xs.len(), 0.0);
        companded = up.samples;
    }
    companded.iter().map(|&y| mu_expand(y as f64) as f32).collect()
}

pub fn codec_proxy(w: &Waveform, bits: u32, down_factor: u32) -> Result<Waveform> {
    if !(2..=16).contains(&bits) {
        return Err(Error::Attack(format!("codec bits {bits} outside [2, 16]")));
    }
    if ![1, 2, 4].contains(&down_factor) {
        return Err(Error::Attack(format!("codec down_factor {down_factor} not in {{1,2,4}}")));
    }
    Ok(Waveform {
        samples: codec_proxy_vec(&w.samples, bits, down_factor),
        sample_rate: w.sample_rate,
    })
}

/// Shell out to a user-supplied encoder; `{in}` and `{out}` in the template
/// are replaced with temporary WAV paths.
pub fn external_codec(w: &Waveform, cmd_template: &str) -> Result<Waveform> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let pid = std::process::id();
    let dir = std::env::temp_dir();
    let in_path = dir.join(format!("vocbulwark_codec_{pid}_{n}_in.wav"));
    let out_path = dir.join(format!("vocbulwark_codec_{pid}_{n}_out.wav"));

    crate::signal::save_wav(w, &in_path)?;
    let cmd = cmd_template
        .replace("{in}", &in_path.to_string_lossy())
        .replace("{out}", &out_path.to_string_lossy());
    let status = std::process::Command::new("sh").arg("-c").arg(&cmd).status();
    let result = match status {
        Ok(st) if st.success() => {
            let decoded = crate::signal::load_wav(&out_path)?;
            let decoded = if decoded.sample_rate == w.sample_rate {
                decoded
            } else {
                resample_linear(&decoded, w.sample_rate)
            };
            Ok(decoded)
        }
        Ok(st) => Err(Error::Attack(format!("external codec exited with {st}: {cmd}"))),
        Err(e) => Err(Error::Attack(format!("external codec failed to launch: {e}"))),
    };
    let _ = std::fs::remove_file(&in_path);
    let _ = std::fs::remove_file(&out_path);
    result
}
