//! Coarse-to-fine gated extractor.
//!
//! Three branches of gated separable convolution modules (kernels 3/5/7, each
//! stride 2, four modules deep) read the raw waveform, adaptive pooling
//! aligns their outputs to a fixed temporal length, two fusion modules mix
//! the concatenation down to 256 channels, and a dual mean/max pooling feeds
//! a two-layer decoder that emits per-bit probabilities. Adaptive pooling is
//! what makes the whole pipeline total over variable-length inputs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{init_uniform, Bound, ParamSet, Scalar, Shape, Tape, Tensor, Var};
use crate::signal::Waveform;

/// Branch kernel sizes, fine to coarse.
pub const BRANCH_KERNELS: [usize; 3] = [3, 5, 7];
/// Channel plan along each branch.
pub const BRANCH_CHANNELS: [usize; 5] = [1, 32, 64, 128, 128];
/// Channel width after fusion.
pub const FUSED_CHANNELS: usize = 256;
/// Hidden width of the decoder.
pub const DECODER_HIDDEN: usize = 512;
/// Shortest accepted input: four stride-2 stages need 16 samples.
pub const MIN_INPUT: usize = 16;

/// Extractor hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct CageConfig {
    /// Message length `l`.
    pub bits: usize,
    /// Temporal length the branch outputs are pooled to before fusion.
    pub pooled_len: usize,
    pub leaky_slope: f64,
    pub norm_eps: f64,
}

impl Default for CageConfig {
    fn default() -> Self {
        CageConfig { bits: 16, pooled_len: 32, leaky_slope: 0.01, norm_eps: 1e-5 }
    }
}

impl CageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.pooled_len == 0 {
            return Err(Error::Invalid("cage config: bits and pooled_len must be >= 1".into()));
        }
        Ok(())
    }
}

fn insert_gscm<R: Rng>(
    ps: &mut ParamSet,
    prefix: &str,
    cin: usize,
    cout: usize,
    k: usize,
    rng: &mut R,
) -> Result<()> {
    ps.insert(&format!("{prefix}/dsc_dw"), init_uniform(Shape::d2(cin, k), k, rng), true)?;
    ps.insert(&format!("{prefix}/dsc_pw"), init_uniform(Shape::d3(cout, cin, 1), cin, rng), true)?;
    ps.insert(&format!("{prefix}/dsc_b"), init_uniform(Shape::d1(cout), cin, rng), true)?;
    ps.insert(&format!("{prefix}/gate_w"), init_uniform(Shape::d3(cout, cin, k), cin * k, rng), true)?;
    ps.insert(&format!("{prefix}/gate_b"), init_uniform(Shape::d1(cout), cin * k, rng), true)?;
    ps.insert(&format!("{prefix}/norm_g"), Tensor::full(Shape::d1(cout), 1.0), true)?;
    ps.insert(&format!("{prefix}/norm_b"), Tensor::zeros(Shape::d1(cout)), true)?;
    Ok(())
}

/// Fresh extractor parameters.
pub fn init_cage_params<R: Rng>(cfg: &CageConfig, rng: &mut R) -> Result<ParamSet> {
    cfg.validate()?;
    let mut ps = ParamSet::new();
    for &k in &BRANCH_KERNELS {
        for j in 0..BRANCH_CHANNELS.len() - 1 {
            insert_gscm(&mut ps, &format!("branch{k}/gscm{j}"), BRANCH_CHANNELS[j], BRANCH_CHANNELS[j + 1], k, rng)?;
        }
    }
    let concat_ch = 3 * BRANCH_CHANNELS[BRANCH_CHANNELS.len() - 1];
    insert_gscm(&mut ps, "fuse0", concat_ch, FUSED_CHANNELS, 1, rng)?;
    insert_gscm(&mut ps, "fuse1", FUSED_CHANNELS, FUSED_CHANNELS, 3, rng)?;
    ps.insert("dec_fc1/w", init_uniform(Shape::d2(DECODER_HIDDEN, FUSED_CHANNELS), FUSED_CHANNELS, rng), true)?;
    ps.insert("dec_fc1/b", init_uniform(Shape::d1(DECODER_HIDDEN), FUSED_CHANNELS, rng), true)?;
    ps.insert("dec_fc2/w", init_uniform(Shape::d2(cfg.bits, DECODER_HIDDEN), DECODER_HIDDEN, rng), true)?;
    ps.insert("dec_fc2/b", init_uniform(Shape::d1(cfg.bits), DECODER_HIDDEN, rng), true)?;
    Ok(ps)
}

/// Gated separable convolution module:
/// `leaky_relu(instance_norm(dsc(x) * sigmoid(gate_conv(x))))`.
/// The gate is a dense convolution with the same geometry as the content path.
pub fn gscm_forward<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    prefix: &str,
    cfg: &CageConfig,
    x: Var,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Var> {
    let content = tape.depthwise_separable_conv1d(
        x,
        p.v(&format!("{prefix}/dsc_dw")),
        p.v(&format!("{prefix}/dsc_pw")),
        p.v(&format!("{prefix}/dsc_b")),
        stride,
        pad,
    )?;
    let gate_pre = tape.conv1d(x, p.v(&format!("{prefix}/gate_w")), Some(p.v(&format!("{prefix}/gate_b"))), stride, pad)?;
    let gate = tape.sigmoid(gate_pre);
    let gated = tape.mul(content, gate)?;
    let normed = tape.instance_norm(
        gated,
        p.v(&format!("{prefix}/norm_g")),
        p.v(&format!("{prefix}/norm_b")),
        S::from_f(cfg.norm_eps),
    )?;
    let _ = k;
    Ok(tape.leaky_relu(normed, S::from_f(cfg.leaky_slope)))
}

/// One multi-scale branch: four stride-2 modules, channels 1 -> 32 -> 64 ->
/// 128 -> 128, padding `(k-1)/2`.
pub fn branch_forward<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    cfg: &CageConfig,
    wav: Var,
    kernel: usize,
) -> Result<Var> {
    let shape = tape.val(wav).shape();
    if shape.rank != 3 || shape.d[1] != 1 {
        return Err(Error::Shape(format!("branch input {shape:?}, want [B,1,L]")));
    }
    if shape.d[2] < MIN_INPUT {
        return Err(Error::Invalid(format!(
            "branch input length {} below minimum {MIN_INPUT}",
            shape.d[2]
        )));
    }
    let pad = (kernel - 1) / 2;
    let mut x = wav;
    for j in 0..BRANCH_CHANNELS.len() - 1 {
        x = gscm_forward(tape, p, &format!("branch{kernel}/gscm{j}"), cfg, x, kernel, 2, pad)?;
    }
    Ok(x)
}

/// Pool each branch to `pooled_len`, concatenate channels, and fuse through
/// two modules down to 256 channels.
pub fn aggregate<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    cfg: &CageConfig,
    fine: Var,
    mid: Var,
    coarse: Var,
) -> Result<Var> {
    let pf = tape.adaptive_avg_pool1d(fine, cfg.pooled_len)?;
    let pm = tape.adaptive_avg_pool1d(mid, cfg.pooled_len)?;
    let pc = tape.adaptive_avg_pool1d(coarse, cfg.pooled_len)?;
    let cat0 = tape.concat_channels(pf, pm)?;
    let cat = tape.concat_channels(cat0, pc)?;
    let fused = gscm_forward(tape, p, "fuse0", cfg, cat, 1, 1, 0)?;
    gscm_forward(tape, p, "fuse1", cfg, fused, 3, 1, 1)
}

/// Mean of adaptive average and adaptive max pooling, squeezed to `[B, C]`.
pub fn dual_pool<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Result<Var> {
    let shape = tape.val(x).shape();
    if shape.rank != 3 {
        return Err(Error::Shape(format!("dual_pool input {shape:?}")));
    }
    let avg = tape.adaptive_avg_pool1d(x, 1)?;
    let max = tape.adaptive_max_pool1d(x, 1)?;
    let sum = tape.add(avg, max)?;
    let half = tape.mul_scalar(sum, S::from_f(0.5));
    tape.reshape(half, Shape::d2(shape.d[0], shape.d[1]))
}

/// Two-layer decoder to per-bit probabilities in (0, 1).
pub fn decode<S: Scalar>(tape: &mut Tape<S>, p: &Bound, cfg: &CageConfig, v: Var) -> Result<Var> {
    let h = tape.fc(v, p.v("dec_fc1/w"), p.v("dec_fc1/b"))?;
    let a = tape.leaky_relu(h, S::from_f(cfg.leaky_slope));
    let logits = tape.fc(a, p.v("dec_fc2/w"), p.v("dec_fc2/b"))?;
    Ok(tape.sigmoid(logits))
}

/// Full extraction pass on an existing tape: `wav` is rank-1; the result is
/// the rank-2 `[B=1, l]` probability vector reshaped to rank-1.
pub fn extract_on_tape<S: Scalar>(tape: &mut Tape<S>, p: &Bound, cfg: &CageConfig, wav: Var) -> Result<Var> {
    let shape = tape.val(wav).shape();
    if shape.rank != 1 {
        return Err(Error::Shape(format!("extract input {shape:?}")));
    }
    let l = shape.d[0];
    if l < MIN_INPUT {
        return Err(Error::Invalid(format!("extract: input length {l} below minimum {MIN_INPUT}")));
    }
    let x = tape.reshape(wav, Shape::d3(1, 1, l))?;
    let fine = branch_forward(tape, p, cfg, x, BRANCH_KERNELS[0])?;
    let mid = branch_forward(tape, p, cfg, x, BRANCH_KERNELS[1])?;
    let coarse = branch_forward(tape, p, cfg, x, BRANCH_KERNELS[2])?;
    let fused = aggregate(tape, p, cfg, fine, mid, coarse)?;
    let pooled = dual_pool(tape, fused)?;
    let probs = decode(tape, p, cfg, pooled)?;
    tape.reshape(probs, Shape::d1(cfg.bits))
}

/// Recover bit probabilities from a waveform.
pub fn extract(wav: &Waveform, params: &ParamSet, cfg: &CageConfig) -> Result<Vec<f32>> {
    let mut tape = Tape::<f32>::new();
    let bound = params.bind(&mut tape, false);
    let w = tape.constant(Tensor::from_vec(wav.samples.clone()));
    let out = extract_on_tape(&mut tape, &bound, cfg, w)?;
    Ok(tape.val(out).data().to_vec())
}

/// Threshold probabilities at 0.5 into hard bits; exactly 0.5 counts as 0.
pub fn harden(probs: &[f32]) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p > 0.5)).collect()
}
