//! Differentiable training losses: log-mel L1, multi-scale STFT, and the
//! bit-recovery cross entropy.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::{Scalar, Shape, Tape, Tensor, Var};
use crate::signal::{centered_pad, hann_periodic, mel_filterbank, MelConfig};

/// Floor inside the magnitude square root; keeps its derivative finite.
const MAG_EPS: f64 = 1e-12;
/// Floor inside the multi-scale log-power term.
const MSTFT_LOG_EPS: f64 = 1e-10;

fn hann_arc<S: Scalar>(n: usize) -> Arc<Vec<S>> {
    Arc::new(hann_periodic(n).into_iter().map(|v| S::from_f(v as f64)).collect())
}

/// Centered power spectrogram of a rank-1 signal on the tape.
fn centered_power<S: Scalar>(tape: &mut Tape<S>, x: Var, fft: usize, hop: usize, win: usize) -> Result<Var> {
    let len = tape.val(x).shape().d[0];
    if len < win {
        return Err(Error::Invalid(format!("loss: input {len} shorter than window {win}")));
    }
    let (left, right) = centered_pad(len, win, hop);
    let padded = tape.pad1d(x, left, right, crate::nn::PadMode::Reflect)?;
    tape.stft_power(padded, fft, hop, hann_arc(win))
}

fn check_same_len<S: Scalar>(tape: &Tape<S>, a: Var, b: Var, what: &str) -> Result<usize> {
    let (sa, sb) = (tape.val(a).shape(), tape.val(b).shape());
    if sa.rank != 1 || sa != sb {
        return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
    }
    Ok(sa.d[0])
}

/// Mean L1 distance between log-compressed mel spectrograms.
pub fn mel_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    reference: Var,
    estimate: Var,
    cfg: &MelConfig,
) -> Result<Var> {
    check_same_len(tape, reference, estimate, "mel_loss")?;
    let fb = Arc::new(Tensor::new(
        Shape::d2(cfg.mel_bins, cfg.stft.bins()),
        mel_filterbank(cfg.mel_bins, cfg.stft.fft_size, crate::signal::SAMPLE_RATE)
            .into_iter()
            .map(S::from_f)
            .collect(),
    ));
    let eps = S::from_f(cfg.log_eps as f64);
    let mut logs = Vec::with_capacity(2);
    for x in [reference, estimate] {
        let p = centered_power(tape, x, cfg.stft.fft_size, cfg.stft.hop, cfg.stft.win)?;
        let mel = tape.matmul_const(Arc::clone(&fb), p)?;
        let shifted = tape.add_scalar(mel, eps);
        logs.push(tape.ln(shifted));
    }
    let diff = tape.sub(logs[0], logs[1])?;
    let a = tape.abs(diff);
    Ok(tape.mean_all(a))
}

/// Multi-scale STFT loss: per scale, a mean-L1 magnitude term plus a mean-L1
/// log10-power term, summed over scales. Each scale uses `hop = fft/4` and
/// `win = fft`.
pub fn msstft_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    reference: Var,
    estimate: Var,
    ffts: &[usize],
    lambda_mag: f64,
    lambda_log: f64,
) -> Result<Var> {
    check_same_len(tape, reference, estimate, "msstft_loss")?;
    if ffts.is_empty() {
        return Err(Error::Invalid("msstft: need at least one scale".into()));
    }
    let inv_ln10 = S::from_f(1.0 / std::f64::consts::LN_10);
    let mut total: Option<Var> = None;
    for &fft in ffts {
        let hop = fft / 4;
        let mut mags = Vec::with_capacity(2);
        let mut logs = Vec::with_capacity(2);
        for x in [reference, estimate] {
            let p = centered_power(tape, x, fft, hop, fft)?;
            mags.push(tape.sqrt_eps(p, S::from_f(MAG_EPS)));
            let shifted = tape.add_scalar(p, S::from_f(MSTFT_LOG_EPS));
            let ln = tape.ln(shifted);
            logs.push(tape.mul_scalar(ln, inv_ln10));
        }
        let md = tape.sub(mags[0], mags[1])?;
        let mda = tape.abs(md);
        let mag_term = tape.mean_all(mda);
        let ld = tape.sub(logs[0], logs[1])?;
        let lda = tape.abs(ld);
        let log_term = tape.mean_all(lda);
        let mw = tape.mul_scalar(mag_term, S::from_f(lambda_mag));
        let lw = tape.mul_scalar(log_term, S::from_f(lambda_log));
        let scale_sum = tape.add(mw, lw)?;
        total = Some(match total {
            None => scale_sum,
            Some(t) => tape.add(t, scale_sum)?,
        });
    }
    Ok(total.unwrap())
}

/// Bit-recovery cross entropy, sum form:
/// `-sum_i [w_i ln p_i + (1-w_i) ln(1-p_i)]` with probabilities clamped to
/// `[1e-7, 1-1e-7]`.
pub fn ext_loss_on_tape<S: Scalar>(tape: &mut Tape<S>, bits: &[u8], probs: Var) -> Result<Var> {
    let shape = tape.val(probs).shape();
    if shape.rank != 1 || shape.d[0] != bits.len() {
        return Err(Error::Shape(format!("ext_loss: {} bits vs probs {shape:?}", bits.len())));
    }
    let lo = S::from_f(1e-7);
    let hi = S::from_f(1.0 - 1e-7);
    let p = tape.clamp(probs, lo, hi);
    let w = tape.constant(Tensor::from_vec(
        bits.iter().map(|&b| S::from_f(b as f64)).collect(),
    ));
    let one_minus_w = tape.constant(Tensor::from_vec(
        bits.iter().map(|&b| S::from_f(1.0 - b as f64)).collect(),
    ));
    let ones = tape.constant(Tensor::full(shape, S::one()));
    let lp = tape.ln(p);
    let q = tape.sub(ones, p)?;
    let lq = tape.ln(q);
    let t1 = tape.mul(w, lp)?;
    let t2 = tape.mul(one_minus_w, lq)?;
    let s = tape.add(t1, t2)?;
    let total = tape.sum_all(s);
    Ok(tape.mul_scalar(total, -S::one()))
}

/// Weighted sum of the three losses under the current curriculum weights.
pub fn total_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    mel: Var,
    msstft: Var,
    ext: Var,
    lambda_mel: f64,
    lambda_mstft: f64,
    lambda_ext: f64,
) -> Result<Var> {
    let a = tape.mul_scalar(mel, S::from_f(lambda_mel));
    let b = tape.mul_scalar(msstft, S::from_f(lambda_mstft));
    let c = tape.mul_scalar(ext, S::from_f(lambda_ext));
    let ab = tape.add(a, b)?;
    tape.add(ab, c)
}

/// Plain scalar mel loss between equal-length waveform sample slices.
pub fn mel_loss(reference: &[f32], estimate: &[f32], cfg: &MelConfig) -> Result<f64> {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::from_vec(reference.to_vec()));
    let b = tape.constant(Tensor::from_vec(estimate.to_vec()));
    let l = mel_loss_on_tape(&mut tape, a, b, cfg)?;
    Ok(tape.val(l).item() as f64)
}

/// Plain scalar multi-scale STFT loss.
pub fn msstft_loss(
    reference: &[f32],
    estimate: &[f32],
    ffts: &[usize],
    lambda_mag: f64,
    lambda_log: f64,
) -> Result<f64> {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::from_vec(reference.to_vec()));
    let b = tape.constant(Tensor::from_vec(estimate.to_vec()));
    let l = msstft_loss_on_tape(&mut tape, a, b, ffts, lambda_mag, lambda_log)?;
    Ok(tape.val(l).item() as f64)
}

/// Plain scalar extraction loss.
pub fn ext_loss(bits: &[u8], probs: &[f32]) -> f64 {
    bits.iter()
        .zip(probs)
        .map(|(&w, &p)| {
            let p = (p as f64).clamp(1e-7, 1.0 - 1e-7);
            -(w as f64 * p.ln() + (1.0 - w as f64) * (1.0 - p).ln())
        })
        .sum()
}
