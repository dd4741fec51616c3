//! Temporal adapter: encodes a bit string, aligns it to the backbone's hidden
//! channel dimension, broadcasts it over time, and injects it residually
//! through a zero-initialized convolution. At initialization the injection is
//! an exact identity, so attaching the adapter never perturbs the backbone
//! until training moves the zero convolution.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{init_uniform, Bound, ParamSet, Scalar, Shape, Tape, Tensor, Var};

/// Dimension of the message embedding produced by the second FC layer.
pub const EMB_DIM: usize = 512;

/// Binary payload of length `l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WatermarkMessage {
    bits: Vec<u8>,
}

impl WatermarkMessage {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Invalid("message: need at least one bit".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Invalid("message: bits must be 0 or 1".into()));
        }
        Ok(WatermarkMessage { bits })
    }

    pub fn random<R: Rng>(len: usize, rng: &mut R) -> Self {
        WatermarkMessage { bits: (0..len).map(|_| rng.gen_range(0..=1u8)).collect() }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// MSB-first hex string, `ceil(l/4)` digits; the leading digit is
    /// zero-padded in its high bits when `l % 4 != 0`.
    pub fn to_hex(&self) -> String {
        let l = self.bits.len();
        let pad = (4 - l % 4) % 4;
        let mut digits = String::new();
        let mut nibble = 0u8;
        let mut count = pad;
        for &b in &self.bits {
            nibble = (nibble << 1) | b;
            count += 1;
            if count == 4 {
                digits.push(char::from_digit(nibble as u32, 16).unwrap().to_ascii_uppercase());
                nibble = 0;
                count = 0;
            }
        }
        digits
    }

    /// Parse an MSB-first hex string into exactly `len` bits. The string must
    /// hold `ceil(len/4)` digits and any high padding bits must be zero.
    pub fn from_hex(s: &str, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Invalid("message: need at least one bit".into()));
        }
        let expect_digits = len.div_ceil(4);
        if s.len() != expect_digits {
            return Err(Error::Invalid(format!(
                "hex message: expected {expect_digits} digits for {len} bits, got {}",
                s.len()
            )));
        }
        let mut all = Vec::with_capacity(s.len() * 4);
        for ch in s.chars() {
            let v = ch
                .to_digit(16)
                .ok_or_else(|| Error::Invalid(format!("hex message: bad digit '{ch}'")))? as u8;
            for shift in (0..4).rev() {
                all.push((v >> shift) & 1);
            }
        }
        let pad = all.len() - len;
        if all[..pad].iter().any(|&b| b != 0) {
            return Err(Error::Invalid(
                "hex message: nonzero padding bits above the declared bit length".into(),
            ));
        }
        WatermarkMessage::new(all[pad..].to_vec())
    }

    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::from_vec(self.bits.iter().map(|&b| S::from_f(b as f64)).collect())
    }
}

/// Adapter hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct TaConfig {
    /// Message length `l`.
    pub bits: usize,
    /// Channel count of the hook point.
    pub channels: usize,
    /// Bottleneck width of the progressive projection.
    pub rank: usize,
    /// Kernel of the fusion depthwise-separable convolution.
    pub dsc_kernel: usize,
    pub leaky_slope: f64,
}

impl Default for TaConfig {
    fn default() -> Self {
        TaConfig { bits: 16, channels: 64, rank: 64, dsc_kernel: 3, leaky_slope: 0.01 }
    }
}

impl TaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.channels == 0 || self.rank == 0 {
            return Err(Error::Invalid("ta config: bits, channels, rank must be >= 1".into()));
        }
        if self.dsc_kernel % 2 == 0 {
            return Err(Error::Invalid("ta config: dsc_kernel must be odd".into()));
        }
        Ok(())
    }
}

/// Fresh adapter parameters. Everything is uniformly initialized except the
/// zero convolution, which starts (and must start) at exactly zero.
pub fn init_ta_params<R: Rng>(cfg: &TaConfig, rng: &mut R) -> Result<ParamSet> {
    cfg.validate()?;
    let (l, c, r, k) = (cfg.bits, cfg.channels, cfg.rank, cfg.dsc_kernel);
    let mut ps = ParamSet::new();
    ps.insert("emb_fc1/w", init_uniform(Shape::d2(2 * c, l), l, rng), true)?;
    ps.insert("emb_fc1/b", init_uniform(Shape::d1(2 * c), l, rng), true)?;
    ps.insert("emb_fc2/w", init_uniform(Shape::d2(EMB_DIM, 2 * c), 2 * c, rng), true)?;
    ps.insert("emb_fc2/b", init_uniform(Shape::d1(EMB_DIM), 2 * c, rng), true)?;
    ps.insert("proj_fc1/w", init_uniform(Shape::d2(r, EMB_DIM), EMB_DIM, rng), true)?;
    ps.insert("proj_fc1/b", init_uniform(Shape::d1(r), EMB_DIM, rng), true)?;
    ps.insert("proj_fc2/w", init_uniform(Shape::d2(c, r), r, rng), true)?;
    ps.insert("proj_fc2/b", init_uniform(Shape::d1(c), r, rng), true)?;
    ps.insert("down_conv/w", init_uniform(Shape::d3(c, 2 * c, 1), 2 * c, rng), true)?;
    ps.insert("down_conv/b", init_uniform(Shape::d1(c), 2 * c, rng), true)?;
    ps.insert("dsc/dw", init_uniform(Shape::d2(c, k), k, rng), true)?;
    ps.insert("dsc/pw", init_uniform(Shape::d3(c, c, 1), c, rng), true)?;
    ps.insert("dsc/b", init_uniform(Shape::d1(c), c, rng), true)?;
    ps.insert("zero_conv/w", Tensor::zeros(Shape::d3(c, c, 1)), true)?;
    ps.insert("zero_conv/b", Tensor::zeros(Shape::d1(c)), true)?;
    Ok(ps)
}

/// Message embedding: two FC layers with LeakyReLU after each.
pub fn embed_message<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    cfg: &TaConfig,
    bits: Var,
) -> Result<Var> {
    let slope = S::from_f(cfg.leaky_slope);
    let e1 = tape.fc(bits, p.v("emb_fc1/w"), p.v("emb_fc1/b"))?;
    let a1 = tape.leaky_relu(e1, slope);
    let e2 = tape.fc(a1, p.v("emb_fc2/w"), p.v("emb_fc2/b"))?;
    Ok(tape.leaky_relu(e2, slope))
}

/// Progressive projection: bottleneck to `rank`, SiLU, expand to the acoustic
/// channel dimension.
pub fn progressive_projection<S: Scalar>(tape: &mut Tape<S>, p: &Bound, e: Var) -> Result<Var> {
    let z = tape.fc(e, p.v("proj_fc1/w"), p.v("proj_fc1/b"))?;
    let a = tape.silu(z);
    tape.fc(a, p.v("proj_fc2/w"), p.v("proj_fc2/b"))
}

/// Fuse the broadcast watermark field into the host features:
/// `zero_conv(dsc(down_conv(w_latent ++ h))) + h`.
pub fn adaptive_inject<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    cfg: &TaConfig,
    w_latent: Var,
    h: Var,
) -> Result<Var> {
    let sl = tape.val(w_latent).shape();
    let sh = tape.val(h).shape();
    if sl != sh {
        return Err(Error::Shape(format!("adaptive_inject: latent {sl:?} vs host {sh:?}")));
    }
    let cat = tape.concat_channels(w_latent, h)?;
    let down = tape.conv1d(cat, p.v("down_conv/w"), Some(p.v("down_conv/b")), 1, 0)?;
    let pad = (cfg.dsc_kernel - 1) / 2;
    let mixed = tape.depthwise_separable_conv1d(down, p.v("dsc/dw"), p.v("dsc/pw"), p.v("dsc/b"), 1, pad)?;
    let delta = tape.conv1d(mixed, p.v("zero_conv/w"), Some(p.v("zero_conv/b")), 1, 0)?;
    tape.add(delta, h)
}

/// Full adapter pass for one item: embed, project, broadcast over the host's
/// temporal axis, inject.
pub fn ta_forward<S: Scalar>(
    tape: &mut Tape<S>,
    p: &Bound,
    cfg: &TaConfig,
    bits: Var,
    h: Var,
) -> Result<Var> {
    let sh = tape.val(h).shape();
    if sh.rank != 3 || sh.d[1] != cfg.channels {
        return Err(Error::Shape(format!(
            "ta_forward: host {sh:?} does not match {} channels",
            cfg.channels
        )));
    }
    let e = embed_message(tape, p, cfg, bits)?;
    let proj = progressive_projection(tape, p, e)?;
    let latent = tape.broadcast_time(proj, sh.d[2])?;
    adaptive_inject(tape, p, cfg, latent, h)
}

/// Convenience non-training wrapper: run the adapter on a plain tensor.
pub fn ta_apply(params: &ParamSet, cfg: &TaConfig, msg: &WatermarkMessage, h: &Tensor<f32>) -> Result<Tensor<f32>> {
    if msg.len() != cfg.bits {
        return Err(Error::Invalid(format!(
            "message length {} does not match configured {}",
            msg.len(),
            cfg.bits
        )));
    }
    let mut tape = Tape::<f32>::new();
    let bound = params.bind(&mut tape, false);
    let bits = tape.constant(msg.to_tensor());
    let hv = tape.constant(h.clone());
    let out = ta_forward(&mut tape, &bound, cfg, bits, hv)?;
    Ok(tape.val(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1234)
    }

    fn random_host(c: usize, t: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
        Tensor::new(Shape::d3(1, c, t), (0..c * t).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn hex_roundtrip_and_padding_rules() {
        let m = WatermarkMessage::from_hex("A5A5", 16).unwrap();
        let expect: Vec<u8> = vec![1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1];
        assert_eq!(m.bits(), expect.as_slice());
        assert_eq!(m.to_hex(), "A5A5");

        // l=6: "2A" = 00 101010, high pad must be zero
        let m6 = WatermarkMessage::from_hex("2A", 6).unwrap();
        assert_eq!(m6.bits(), &[1, 0, 1, 0, 1, 0]);
        assert!(WatermarkMessage::from_hex("AA", 6).is_err(), "nonzero pad bits");
        assert!(WatermarkMessage::from_hex("A5A", 16).is_err(), "wrong digit count");
    }

    #[test]
    fn identity_at_init_is_bit_exact() {
        let mut r = rng();
        let cfg = TaConfig { bits: 8, channels: 6, rank: 4, ..TaConfig::default() };
        let params = init_ta_params(&cfg, &mut r).unwrap();
        for trial in 0..10 {
            let msg = WatermarkMessage::random(8, &mut r);
            let h = random_host(6, 17 + trial, &mut r);
            let out = ta_apply(&params, &cfg, &msg, &h).unwrap();
            assert_eq!(out.data(), h.data(), "trial {trial}");
        }
    }

    #[test]
    fn output_shape_matches_input_across_lengths() {
        let mut r = rng();
        let cfg = TaConfig { bits: 4, channels: 5, rank: 3, ..TaConfig::default() };
        let params = init_ta_params(&cfg, &mut r).unwrap();
        let msg = WatermarkMessage::random(4, &mut r);
        for t in [1usize, 17, 256] {
            let h = random_host(5, t, &mut r);
            let out = ta_apply(&params, &cfg, &msg, &h).unwrap();
            assert_eq!(out.shape(), Shape::d3(1, 5, t));
        }
    }

    #[test]
    fn zero_message_zero_biases_embeds_to_zero() {
        let mut r = rng();
        let cfg = TaConfig { bits: 4, channels: 3, rank: 2, ..TaConfig::default() };
        let mut params = init_ta_params(&cfg, &mut r).unwrap();
        params.set_value("emb_fc1/b", Tensor::zeros(Shape::d1(6)));
        params.set_value("emb_fc2/b", Tensor::zeros(Shape::d1(EMB_DIM)));
        let mut tape = Tape::<f32>::new();
        let bound = params.bind(&mut tape, false);
        let bits = tape.constant(Tensor::from_vec(vec![0.0; 4]));
        let e = embed_message(&mut tape, &bound, &cfg, bits).unwrap();
        assert!(tape.val(e).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn messages_differing_in_one_bit_embed_differently() {
        let mut r = rng();
        let cfg = TaConfig { bits: 8, channels: 4, rank: 4, ..TaConfig::default() };
        let params = init_ta_params(&cfg, &mut r).unwrap();
        let m0 = WatermarkMessage::new(vec![0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let m1 = WatermarkMessage::new(vec![1, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        let mut tape = Tape::<f32>::new();
        let bound = params.bind(&mut tape, false);
        let b0 = tape.constant(m0.to_tensor());
        let b1 = tape.constant(m1.to_tensor());
        let e0 = embed_message(&mut tape, &bound, &cfg, b0).unwrap();
        let e1 = embed_message(&mut tape, &bound, &cfg, b1).unwrap();
        assert_ne!(tape.val(e0).data(), tape.val(e1).data());
    }

    #[test]
    fn projection_matches_explicit_matrix_composition() {
        let mut r = rng();
        let cfg = TaConfig { bits: 4, channels: 5, rank: 3, ..TaConfig::default() };
        let params = init_ta_params(&cfg, &mut r).unwrap();
        let e: Vec<f32> = (0..EMB_DIM).map(|_| r.gen_range(-1.0f32..1.0)).collect();

        let mut tape = Tape::<f32>::new();
        let bound = params.bind(&mut tape, false);
        let ev = tape.constant(Tensor::from_vec(e.clone()));
        let out = progressive_projection(&mut tape, &bound, ev).unwrap();

        // oracle: the same two affine maps composed by hand
        let w1 = params.tensor("proj_fc1/w");
        let b1 = params.tensor("proj_fc1/b");
        let w2 = params.tensor("proj_fc2/w");
        let b2 = params.tensor("proj_fc2/b");
        let mut mid = vec![0.0f32; cfg.rank];
        for (i, m) in mid.iter_mut().enumerate() {
            let mut acc = b1.data()[i];
            for (j, &x) in e.iter().enumerate() {
                acc += w1.at2(i, j) * x;
            }
            let sig = 1.0 / (1.0 + (-acc).exp());
            *m = acc * sig;
        }
        for i in 0..cfg.channels {
            let mut acc = b2.data()[i];
            for (j, &m) in mid.iter().enumerate() {
                acc += w2.at2(i, j) * m;
            }
            assert!((tape.val(out).data()[i] - acc).abs() < 1e-6);
        }
    }

    #[test]
    fn rank_one_projection_spans_a_line() {
        let mut r = rng();
        let cfg = TaConfig { bits: 4, channels: 6, rank: 1, ..TaConfig::default() };
        let params = init_ta_params(&cfg, &mut r).unwrap();
        let mut tape = Tape::<f32>::new();
        let bound = params.bind(&mut tape, false);
        // outputs minus bias must be parallel for any inputs
        let b2 = params.tensor("proj_fc2/b").clone();
        let mut dirs: Vec<Vec<f32>> = Vec::new();
        for _ in 0..4 {
            let e: Vec<f32> = (0..EMB_DIM).map(|_| r.gen_range(-1.0f32..1.0)).collect();
            let ev = tape.constant(Tensor::from_vec(e));
            let out = progressive_projection(&mut tape, &bound, ev).unwrap();
            let centered: Vec<f32> =
                tape.val(out).data().iter().zip(b2.data()).map(|(o, b)| o - b).collect();
            dirs.push(centered);
        }
        let base = &dirs[0];
        for d in &dirs[1..] {
            // cross-ratio test: d[i]*base[j] == d[j]*base[i]
            for i in 0..6 {
                for j in (i + 1)..6 {
                    let lhs = d[i] * base[j];
                    let rhs = d[j] * base[i];
                    assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn broadcast_then_mean_pool_recovers_vector() {
        let mut tape = Tape::<f32>::new();
        let v = tape.constant(Tensor::from_vec(vec![0.5, -1.5, 2.0]));
        let b = tape.broadcast_time(v, 13).unwrap();
        let pooled = tape.adaptive_avg_pool1d(b, 1).unwrap();
        assert_eq!(tape.val(pooled).data(), &[0.5, -1.5, 2.0]);
    }

    #[test]
    fn injected_residual_is_time_constant_in_interior_for_constant_host() {
        let mut r = rng();
        let cfg = TaConfig { bits: 6, channels: 4, rank: 4, ..TaConfig::default() };
        let mut params = init_ta_params(&cfg, &mut r).unwrap();
        // move the zero conv off zero so the residual is visible
        params.set_value("zero_conv/w", init_uniform(Shape::d3(4, 4, 1), 4, &mut r));
        params.set_value("zero_conv/b", init_uniform(Shape::d1(4), 4, &mut r));
        let msg = WatermarkMessage::random(6, &mut r);
        let t = 24;
        let h = Tensor::new(Shape::d3(1, 4, t), vec![0.37; 4 * t]);
        let out = ta_apply(&params, &cfg, &msg, &h).unwrap();
        let margin = cfg.dsc_kernel;
        for c in 0..4 {
            let mid = out.at3(0, c, t / 2) - h.at3(0, c, t / 2);
            for ti in margin..t - margin {
                let resid = out.at3(0, c, ti) - h.at3(0, c, ti);
                assert!((resid - mid).abs() < 1e-6, "c={c} t={ti}");
            }
        }
    }

    #[test]
    fn residual_field_is_shift_covariant_in_interior() {
        let mut r = rng();
        let cfg = TaConfig { bits: 6, channels: 4, rank: 4, ..TaConfig::default() };
        let mut params = init_ta_params(&cfg, &mut r).unwrap();
        params.set_value("zero_conv/w", init_uniform(Shape::d3(4, 4, 1), 4, &mut r));
        params.set_value("zero_conv/b", init_uniform(Shape::d1(4), 4, &mut r));
        let msg = WatermarkMessage::random(6, &mut r);
        let t = 40;
        let shift = 5;
        let h = random_host(4, t, &mut r);
        let mut h_shifted = Tensor::zeros(Shape::d3(1, 4, t));
        for c in 0..4 {
            for ti in 0..t {
                let src = (ti + t - shift) % t;
                h_shifted.data_mut()[c * t + ti] = h.at3(0, c, src);
            }
        }
        let out = ta_apply(&params, &cfg, &msg, &h).unwrap();
        let out_s = ta_apply(&params, &cfg, &msg, &h_shifted).unwrap();
        let margin = shift + cfg.dsc_kernel;
        for c in 0..4 {
            for ti in margin..t - margin {
                let a = out.at3(0, c, ti) - h.at3(0, c, ti);
                let b = out_s.at3(0, c, ti + shift) - h_shifted.at3(0, c, ti + shift);
                assert!((a - b).abs() < 1e-5, "c={c} t={ti}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn distinct_messages_give_distinct_residuals_on_generic_params() {
        let mut r = rng();
        let cfg = TaConfig { bits: 8, channels: 4, rank: 4, ..TaConfig::default() };
        let mut params = init_ta_params(&cfg, &mut r).unwrap();
        params.set_value("zero_conv/w", init_uniform(Shape::d3(4, 4, 1), 4, &mut r));
        let h = random_host(4, 20, &mut r);
        let m1 = WatermarkMessage::new(vec![0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        let m2 = WatermarkMessage::new(vec![1, 0, 1, 0, 1, 0, 1, 0]).unwrap();
        let o1 = ta_apply(&params, &cfg, &m1, &h).unwrap();
        let o2 = ta_apply(&params, &cfg, &m2, &h).unwrap();
        let l2: f32 = o1
            .data()
            .iter()
            .zip(o2.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(l2 > 0.0);
    }
}
