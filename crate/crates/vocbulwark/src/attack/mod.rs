//! Attack simulation: named distortion specs, the training augmentation pool,
//! and application in plain or gradient-carrying mode.
//!
//! In gradient mode, differentiable operations (additive noise, filters,
//! scaling, echo) propagate true gradients; non-differentiable ones
//! (suppression, dither's quantization role, the codec quantizer, clipping)
//! pass gradients through as identity so training signals still traverse the
//! attack layer.

mod fir;
pub mod ops;
mod stretch;

pub use fir::{design_bandpass, design_highpass, design_lowpass, filter_same, FIR_TAPS};
pub use ops::{CropPosition, DITHER_Q};
pub use stretch::time_stretch;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tape, Tensor, Var};
use crate::signal::Waveform;

fn default_echo_delay() -> f64 {
    100.0
}
fn default_echo_decay() -> f64 {
    0.3
}
fn default_suppression_span() -> f64 {
    0.1
}

/// A named distortion with its parameters. Serializes as
/// `{"name": "...", "params": {...}}`, matching the benchmark grid format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum AttackSpec {
    GaussianNoise {
        snr_db: f64,
    },
    PinkNoise {
        std: f64,
    },
    Lowpass {
        cutoff_hz: f64,
    },
    Highpass {
        cutoff_hz: f64,
    },
    Bandpass {
        lo_hz: f64,
        hi_hz: f64,
    },
    Suppression {
        #[serde(default = "default_suppression_span")]
        span: f64,
    },
    DitherTpdf,
    Echo {
        #[serde(default = "default_echo_delay")]
        delay_ms: f64,
        #[serde(default = "default_echo_decay")]
        decay: f64,
    },
    AmplitudeScale {
        factor: f64,
    },
    TimeStretch {
        factor: f64,
    },
    Crop {
        ratio: f64,
        position: CropPosition,
    },
    CodecProxy {
        bits: u32,
        down_factor: u32,
    },
    ExternalCodec,
    Identity,
}

impl AttackSpec {
    /// Stable lowercase name matching the serialized form.
    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::GaussianNoise { .. } => "gaussian_noise",
            AttackSpec::PinkNoise { .. } => "pink_noise",
            AttackSpec::Lowpass { .. } => "lowpass",
            AttackSpec::Highpass { .. } => "highpass",
            AttackSpec::Bandpass { .. } => "bandpass",
            AttackSpec::Suppression { .. } => "suppression",
            AttackSpec::DitherTpdf => "dither_tpdf",
            AttackSpec::Echo { .. } => "echo",
            AttackSpec::AmplitudeScale { .. } => "amplitude_scale",
            AttackSpec::TimeStretch { .. } => "time_stretch",
            AttackSpec::Crop { .. } => "crop",
            AttackSpec::CodecProxy { .. } => "codec_proxy",
            AttackSpec::ExternalCodec => "external_codec",
            AttackSpec::Identity => "identity",
        }
    }

    /// Compact parameter rendering for reports.
    pub fn params_string(&self) -> String {
        match self {
            AttackSpec::GaussianNoise { snr_db } => format!("snr_db={snr_db}"),
            AttackSpec::PinkNoise { std } => format!("std={std}"),
            AttackSpec::Lowpass { cutoff_hz } => format!("cutoff_hz={cutoff_hz}"),
            AttackSpec::Highpass { cutoff_hz } => format!("cutoff_hz={cutoff_hz}"),
            AttackSpec::Bandpass { lo_hz, hi_hz } => format!("lo_hz={lo_hz};hi_hz={hi_hz}"),
            AttackSpec::Suppression { span } => format!("span={span}"),
            AttackSpec::DitherTpdf => String::new(),
            AttackSpec::Echo { delay_ms, decay } => format!("delay_ms={delay_ms};decay={decay}"),
            AttackSpec::AmplitudeScale { factor } => format!("factor={factor}"),
            AttackSpec::TimeStretch { factor } => format!("factor={factor}"),
            AttackSpec::Crop { ratio, position } => {
                format!("ratio={ratio};position={}", match position {
                    CropPosition::Front => "front",
                    CropPosition::Behind => "behind",
                })
            }
            AttackSpec::CodecProxy { bits, down_factor } => {
                format!("bits={bits};down_factor={down_factor}")
            }
            AttackSpec::ExternalCodec => String::new(),
            AttackSpec::Identity => String::new(),
        }
    }
}

/// Apply a spec to a waveform. `rng` drives any randomness the op needs, so
/// `(spec, seed)` fully determines the output. `ExternalCodec` needs the
/// command template from [`apply_with`].
pub fn apply<R: Rng>(spec: &AttackSpec, w: &Waveform, rng: &mut R) -> Result<Waveform> {
    apply_with(spec, w, rng, None)
}

/// [`apply`] with an optional external codec command (`{in}`/`{out}`
/// placeholders).
pub fn apply_with<R: Rng>(
    spec: &AttackSpec,
    w: &Waveform,
    rng: &mut R,
    external_cmd: Option<&str>,
) -> Result<Waveform> {
    match spec {
        AttackSpec::GaussianNoise { snr_db } => Ok(ops::gaussian_noise(w, *snr_db, rng).0),
        AttackSpec::PinkNoise { std } => Ok(ops::pink_noise(w, *std, rng)),
        AttackSpec::Lowpass { cutoff_hz } => {
            filter_same(w, &design_lowpass(*cutoff_hz, w.sample_rate)?)
        }
        AttackSpec::Highpass { cutoff_hz } => {
            filter_same(w, &design_highpass(*cutoff_hz, w.sample_rate)?)
        }
        AttackSpec::Bandpass { lo_hz, hi_hz } => {
            filter_same(w, &design_bandpass(*lo_hz, *hi_hz, w.sample_rate)?)
        }
        AttackSpec::Suppression { span } => Ok(ops::suppression(w, *span, rng)),
        AttackSpec::DitherTpdf => Ok(ops::dither_tpdf(w, rng)),
        AttackSpec::Echo { delay_ms, decay } => ops::echo(w, *delay_ms, *decay),
        AttackSpec::AmplitudeScale { factor } => ops::amplitude_scale(w, *factor),
        AttackSpec::TimeStretch { factor } => time_stretch(w, *factor),
        AttackSpec::Crop { ratio, position } => ops::crop(w, *ratio, *position),
        AttackSpec::CodecProxy { bits, down_factor } => ops::codec_proxy(w, *bits, *down_factor),
        AttackSpec::ExternalCodec => match external_cmd {
            Some(cmd) => ops::external_codec(w, cmd),
            None => Err(Error::Attack("external_codec: no command configured".into())),
        },
        AttackSpec::Identity => Ok(w.clone()),
    }
}

/// Gradient-mode application on a tape. Length-changing and shell-out ops are
/// rejected here; they never appear in the training pool.
pub fn apply_on_tape<S: Scalar, R: Rng>(
    tape: &mut Tape<S>,
    spec: &AttackSpec,
    wav: Var,
    sample_rate: u32,
    rng: &mut R,
) -> Result<Var> {
    let len = tape.val(wav).shape().d[0];
    match spec {
        AttackSpec::Identity => Ok(wav),
        AttackSpec::GaussianNoise { snr_db } => {
            let power = tape
                .val(wav)
                .data()
                .iter()
                .map(|&s| s.to_f64x() * s.to_f64x())
                .sum::<f64>()
                / len as f64;
            if power <= 0.0 {
                return Ok(wav);
            }
            let noise = ops::white_gaussian(len, rng);
            let raw = noise.iter().map(|&n| n * n).sum::<f64>() / len as f64;
            let scale = ops::snr_scale(power, raw, *snr_db);
            let nt = Tensor::from_vec(noise.iter().map(|&n| S::from_f(scale * n)).collect());
            tape.add_const(wav, &nt)
        }
        AttackSpec::PinkNoise { std } => {
            let noise = ops::pink_vec(len, *std, rng);
            let nt = Tensor::from_vec(noise.iter().map(|&n| S::from_f(n)).collect());
            tape.add_const(wav, &nt)
        }
        AttackSpec::DitherTpdf => {
            let noise = ops::tpdf_vec(len, rng);
            let nt = Tensor::from_vec(noise.iter().map(|&n| S::from_f(n)).collect());
            tape.add_const(wav, &nt)
        }
        AttackSpec::Lowpass { cutoff_hz } => {
            fir_same_on_tape(tape, wav, &design_lowpass(*cutoff_hz, sample_rate)?)
        }
        AttackSpec::Highpass { cutoff_hz } => {
            fir_same_on_tape(tape, wav, &design_highpass(*cutoff_hz, sample_rate)?)
        }
        AttackSpec::Bandpass { lo_hz, hi_hz } => {
            fir_same_on_tape(tape, wav, &design_bandpass(*lo_hz, *hi_hz, sample_rate)?)
        }
        AttackSpec::Suppression { span } => {
            let (start, slen) = ops::suppression_span(len, *span, rng);
            Ok(tape.straight_through(wav, move |xs| {
                let mut out = xs.to_vec();
                for v in &mut out[start..start + slen] {
                    *v = S::zero();
                }
                out
            }))
        }
        AttackSpec::Echo { delay_ms, decay } => {
            let delay = ((delay_ms / 1000.0) * sample_rate as f64).round() as usize;
            tape.echo_op(wav, delay, S::from_f(*decay))
        }
        AttackSpec::AmplitudeScale { factor } => {
            if *factor <= 0.0 {
                return Err(Error::Attack(format!("amplitude factor {factor} must be > 0")));
            }
            let scaled = tape.mul_scalar(wav, S::from_f(*factor));
            // clipping is straight-through
            Ok(tape.straight_through(scaled, |xs| {
                xs.iter().map(|&x| x.max(-S::one()).min(S::one())).collect()
            }))
        }
        AttackSpec::CodecProxy { bits, down_factor } => {
            if !(2..=16).contains(bits) || ![1, 2, 4].contains(down_factor) {
                return Err(Error::Attack("codec_proxy parameters out of range".into()));
            }
            let (bits, down_factor) = (*bits, *down_factor);
            Ok(tape.straight_through(wav, move |xs| {
                let f32s: Vec<f32> = xs.iter().map(|&x| x.to_f64x() as f32).collect();
                ops::codec_proxy_vec(&f32s, bits, down_factor)
                    .into_iter()
                    .map(|v| S::from_f(v as f64))
                    .collect()
            }))
        }
        AttackSpec::TimeStretch { .. } | AttackSpec::Crop { .. } | AttackSpec::ExternalCodec => {
            Err(Error::Attack(format!("{}: not available in gradient mode", spec.name())))
        }
    }
}

fn fir_same_on_tape<S: Scalar>(tape: &mut Tape<S>, wav: Var, taps: &[f64]) -> Result<Var> {
    let half = (taps.len() - 1) / 2;
    let padded = tape.pad1d(wav, half, half, crate::nn::PadMode::Symmetric)?;
    let taps_s: Arc<Vec<S>> = Arc::new(taps.iter().map(|&t| S::from_f(t)).collect());
    tape.fir_valid(padded, taps_s)
}

/// The nine-entry training augmentation pool with its parameter ranges.
/// Selection is uniform over entries; parameters draw uniformly from their
/// ranges.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingPool {
    pub gaussian_snr_db: (f64, f64),
    pub bandpass_hz: (f64, f64),
    pub highpass_cutoff_hz: f64,
    pub suppression_span: f64,
    pub echo_delay_ms: f64,
    pub echo_decay: f64,
    pub amplitude: (f64, f64),
    pub codec_bits: (u32, u32),
}

impl Default for TrainingPool {
    fn default() -> Self {
        TrainingPool {
            gaussian_snr_db: (15.0, 20.0),
            bandpass_hz: (1500.0, 10_000.0),
            highpass_cutoff_hz: 500.0,
            suppression_span: 0.1,
            echo_delay_ms: 100.0,
            echo_decay: 0.3,
            amplitude: (0.9, 1.1),
            codec_bits: (8, 12),
        }
    }
}

/// Number of entries in the training pool.
pub const POOL_SIZE: usize = 9;

/// Draw one attack uniformly from the pool, with parameters sampled from
/// their documented ranges.
pub fn sample_training_attack<R: Rng>(pool: &TrainingPool, rng: &mut R) -> AttackSpec {
    match rng.gen_range(0..POOL_SIZE) {
        0 => AttackSpec::GaussianNoise {
            snr_db: rng.gen_range(pool.gaussian_snr_db.0..=pool.gaussian_snr_db.1),
        },
        1 => AttackSpec::Bandpass { lo_hz: pool.bandpass_hz.0, hi_hz: pool.bandpass_hz.1 },
        2 => AttackSpec::Highpass { cutoff_hz: pool.highpass_cutoff_hz },
        3 => AttackSpec::Suppression { span: pool.suppression_span },
        4 => AttackSpec::DitherTpdf,
        5 => AttackSpec::Echo { delay_ms: pool.echo_delay_ms, decay: pool.echo_decay },
        6 => AttackSpec::AmplitudeScale { factor: rng.gen_range(pool.amplitude.0..=pool.amplitude.1) },
        7 => AttackSpec::CodecProxy {
            bits: rng.gen_range(pool.codec_bits.0..=pool.codec_bits.1),
            down_factor: 1,
        },
        _ => AttackSpec::Identity,
    }
}
