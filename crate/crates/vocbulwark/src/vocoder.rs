//! Mel-to-waveform backbone: an input convolution, four 4x transposed-conv
//! upsampling stages each followed by a residual block, and a tanh-squashed
//! output convolution. The product of the upsampling factors equals the mel
//! hop, so a spectrogram with `F` frames synthesizes exactly `F * hop`
//! samples. A single hook right after the first upsampling stage is where the
//! temporal adapter injects.

use rand::Rng;

use crate::adapter::{self, TaConfig, WatermarkMessage};
use crate::error::{Error, Result};
use crate::nn::{init_uniform, Bound, ParamSet, Scalar, Shape, Tape, Tensor, Var};
use crate::signal::{MelSpectrogram, Waveform, SAMPLE_RATE};

pub const IN_KERNEL: usize = 7;
pub const UP_KERNEL: usize = 8;
pub const UP_STRIDE: usize = 4;
pub const UP_PAD: usize = 2;
pub const RES_KERNEL: usize = 3;
pub const OUT_KERNEL: usize = 7;

/// Backbone architecture. `channels[0]` is the width after the input conv;
/// each later entry is the width after one upsampling stage.
#[derive(Clone, Debug)]
pub struct VocoderConfig {
    pub mel_bins: usize,
    pub channels: Vec<usize>,
    /// 1-based index of the upsampling stage whose output feeds the hook.
    pub hook_stage: usize,
    pub leaky_slope: f64,
    /// Floor for log compression of the input mel.
    pub mel_log_eps: f32,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        VocoderConfig {
            mel_bins: 64,
            channels: vec![128, 64, 32, 16, 8],
            hook_stage: 1,
            leaky_slope: 0.01,
            mel_log_eps: 1e-5,
        }
    }
}

impl VocoderConfig {
    pub fn stages(&self) -> usize {
        self.channels.len() - 1
    }

    /// Total upsampling factor; must equal the mel hop.
    pub fn upsample_product(&self) -> usize {
        UP_STRIDE.pow(self.stages() as u32)
    }

    /// Channel width at the hook point.
    pub fn hook_channels(&self) -> usize {
        self.channels[self.hook_stage]
    }

    pub fn validate(&self, mel_hop: usize) -> Result<()> {
        if self.channels.len() < 2 {
            return Err(Error::Invalid("vocoder: need at least one upsampling stage".into()));
        }
        if self.hook_stage == 0 || self.hook_stage > self.stages() {
            return Err(Error::Invalid(format!(
                "vocoder: hook_stage {} out of range 1..={}",
                self.hook_stage,
                self.stages()
            )));
        }
        if self.upsample_product() != mel_hop {
            return Err(Error::Invalid(format!(
                "vocoder: upsample product {} must equal mel hop {mel_hop}",
                self.upsample_product()
            )));
        }
        Ok(())
    }
}

/// Backbone with its parameter set; `freeze` locks every tensor before
/// watermark training.
#[derive(Clone)]
pub struct Vocoder {
    pub cfg: VocoderConfig,
    pub params: ParamSet,
}

impl Vocoder {
    pub fn init<R: Rng>(cfg: VocoderConfig, rng: &mut R) -> Result<Self> {
        let mut ps = ParamSet::new();
        let ch = &cfg.channels;
        ps.insert(
            "in_conv/w",
            init_uniform(Shape::d3(ch[0], cfg.mel_bins, IN_KERNEL), cfg.mel_bins * IN_KERNEL, rng),
            true,
        )?;
        ps.insert("in_conv/b", init_uniform(Shape::d1(ch[0]), cfg.mel_bins * IN_KERNEL, rng), true)?;
        for i in 1..ch.len() {
            let (cin, cout) = (ch[i - 1], ch[i]);
            ps.insert(
                &format!("up{i}/w"),
                init_uniform(Shape::d3(cin, cout, UP_KERNEL), cin * UP_KERNEL / UP_STRIDE, rng),
                true,
            )?;
            ps.insert(&format!("up{i}/b"), init_uniform(Shape::d1(cout), cin, rng), true)?;
            for c in ["c1", "c2"] {
                ps.insert(
                    &format!("res{i}/{c}/w"),
                    init_uniform(Shape::d3(cout, cout, RES_KERNEL), cout * RES_KERNEL, rng),
                    true,
                )?;
                ps.insert(&format!("res{i}/{c}/b"), init_uniform(Shape::d1(cout), cout * RES_KERNEL, rng), true)?;
            }
        }
        let last = *ch.last().unwrap();
        ps.insert("out_conv/w", init_uniform(Shape::d3(1, last, OUT_KERNEL), last * OUT_KERNEL, rng), true)?;
        ps.insert("out_conv/b", init_uniform(Shape::d1(1), last * OUT_KERNEL, rng), true)?;
        Ok(Vocoder { cfg, params: ps })
    }

    pub fn freeze(&mut self) {
        self.params.freeze();
    }

    pub fn is_frozen(&self) -> bool {
        self.params.all_frozen()
    }

    /// Clean synthesis.
    pub fn generate(&self, mel: &MelSpectrogram) -> Result<Waveform> {
        let mut tape = Tape::<f32>::new();
        let bound = self.params.bind(&mut tape, false);
        let mel_var = tape.constant(log_mel_tensor::<f32>(mel, self.cfg.mel_log_eps));
        let out = vocoder_forward(&mut tape, &bound, &self.cfg, mel_var, |_, h| Ok(h))?;
        Waveform::new(tape.val(out).data().to_vec(), SAMPLE_RATE)
    }

    /// Synthesis with the adapter injected at the hook. With a freshly
    /// initialized adapter this is bit-identical to [`Vocoder::generate`].
    pub fn generate_watermarked(
        &self,
        mel: &MelSpectrogram,
        msg: &WatermarkMessage,
        ta_params: &ParamSet,
        ta_cfg: &TaConfig,
    ) -> Result<Waveform> {
        if ta_cfg.channels != self.cfg.hook_channels() {
            return Err(Error::Shape(format!(
                "adapter channels {} do not match hook width {}",
                ta_cfg.channels,
                self.cfg.hook_channels()
            )));
        }
        if msg.len() != ta_cfg.bits {
            return Err(Error::Invalid(format!(
                "message length {} does not match configured {}",
                msg.len(),
                ta_cfg.bits
            )));
        }
        let mut tape = Tape::<f32>::new();
        let bound = self.params.bind(&mut tape, false);
        let ta_bound = ta_params.bind(&mut tape, false);
        let bits = tape.constant(msg.to_tensor());
        let mel_var = tape.constant(log_mel_tensor::<f32>(mel, self.cfg.mel_log_eps));
        let out = vocoder_forward(&mut tape, &bound, &self.cfg, mel_var, |tape, h| {
            adapter::ta_forward(tape, &ta_bound, ta_cfg, bits, h)
        })?;
        Waveform::new(tape.val(out).data().to_vec(), SAMPLE_RATE)
    }
}

/// Log-compressed mel as a `[1, mel_bins, frames]` tensor.
pub fn log_mel_tensor<S: Scalar>(mel: &MelSpectrogram, eps: f32) -> Tensor<S> {
    let data = mel
        .values
        .iter()
        .map(|&v| S::from_f(((v + eps) as f64).ln()))
        .collect();
    Tensor::new(Shape::d3(1, mel.mel_bins, mel.frames), data)
}

/// Backbone forward pass on an existing tape. `hook` transforms the hidden
/// features right after the configured upsampling stage; pass the identity
/// for clean synthesis. Returns the rank-1 waveform variable.
pub fn vocoder_forward<S: Scalar, H>(
    tape: &mut Tape<S>,
    p: &Bound,
    cfg: &VocoderConfig,
    log_mel: Var,
    hook: H,
) -> Result<Var>
where
    H: FnOnce(&mut Tape<S>, Var) -> Result<Var>,
{
    let shape = tape.val(log_mel).shape();
    if shape.rank != 3 || shape.d[1] != cfg.mel_bins {
        return Err(Error::Shape(format!(
            "vocoder input {shape:?} does not match {} mel bins",
            cfg.mel_bins
        )));
    }
    let slope = S::from_f(cfg.leaky_slope);
    let mut x = tape.conv1d(log_mel, p.v("in_conv/w"), Some(p.v("in_conv/b")), 1, IN_KERNEL / 2)?;
    let mut hook = Some(hook);
    for i in 1..cfg.channels.len() {
        let a = tape.leaky_relu(x, slope);
        x = tape.conv_transpose1d(a, p.v(&format!("up{i}/w")), Some(p.v(&format!("up{i}/b"))), UP_STRIDE, UP_PAD)?;
        if i == cfg.hook_stage {
            let h = hook.take().expect("hook consumed once");
            x = h(tape, x)?;
        }
        // residual block
        let r0 = tape.leaky_relu(x, slope);
        let r1 = tape.conv1d(r0, p.v(&format!("res{i}/c1/w")), Some(p.v(&format!("res{i}/c1/b"))), 1, RES_KERNEL / 2)?;
        let r2 = tape.leaky_relu(r1, slope);
        let r3 = tape.conv1d(r2, p.v(&format!("res{i}/c2/w")), Some(p.v(&format!("res{i}/c2/b"))), 1, RES_KERNEL / 2)?;
        x = tape.add(x, r3)?;
    }
    let y = tape.leaky_relu(x, slope);
    let y = tape.conv1d(y, p.v("out_conv/w"), Some(p.v("out_conv/b")), 1, OUT_KERNEL / 2)?;
    let y = tape.tanh_act(y);
    let t = tape.val(y).shape().d[2];
    tape.reshape(y, Shape::d1(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::init_ta_params;
    use crate::signal::{mel_transform, synth, MelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_vocoder(seed: u64) -> Vocoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // tiny channel plan for fast tests; still 4 stages of x4 = hop 256
        let cfg = VocoderConfig { channels: vec![16, 8, 8, 8, 4], ..VocoderConfig::default() };
        Vocoder::init(cfg, &mut rng).unwrap()
    }

    fn test_mel() -> MelSpectrogram {
        let clip = synth::voice_clip(5, 0.25, SAMPLE_RATE);
        mel_transform(&clip, &MelConfig::default()).unwrap()
    }

    #[test]
    fn output_length_is_frames_times_hop() {
        let voc = small_vocoder(1);
        let mel = test_mel();
        let out = voc.generate(&mel).unwrap();
        assert_eq!(out.len(), mel.frames * 256);
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let voc = small_vocoder(2);
        let mel = test_mel();
        let a = voc.generate(&mel).unwrap();
        let b = voc.generate(&mel).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.samples.iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn zero_mel_gives_fixed_waveform() {
        let voc = small_vocoder(3);
        let mel = MelSpectrogram {
            values: vec![0.0; 64 * 10],
            mel_bins: 64,
            frames: 10,
            config: MelConfig::default().stft,
        };
        let a = voc.generate(&mel).unwrap();
        let b = voc.generate(&mel).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.len(), 2560);
    }

    #[test]
    fn hook_transparency_fresh_adapter_is_exact() {
        let voc = small_vocoder(4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let ta_cfg = TaConfig { bits: 8, channels: voc.cfg.hook_channels(), rank: 4, ..TaConfig::default() };
        let ta = init_ta_params(&ta_cfg, &mut rng).unwrap();
        let mel = test_mel();
        let clean = voc.generate(&mel).unwrap();
        for _ in 0..3 {
            let msg = WatermarkMessage::random(8, &mut rng);
            let wm = voc.generate_watermarked(&mel, &msg, &ta, &ta_cfg).unwrap();
            assert_eq!(clean.samples, wm.samples);
        }
    }

    #[test]
    fn channel_mismatch_at_hook_is_an_error() {
        let voc = small_vocoder(5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ta_cfg = TaConfig { bits: 8, channels: voc.cfg.hook_channels() + 1, rank: 4, ..TaConfig::default() };
        let ta = init_ta_params(&ta_cfg, &mut rng).unwrap();
        let msg = WatermarkMessage::random(8, &mut rng);
        assert!(voc.generate_watermarked(&test_mel(), &msg, &ta, &ta_cfg).is_err());
    }

    #[test]
    fn length_scales_linearly_with_frames() {
        let voc = small_vocoder(6);
        let mel_cfg = MelConfig::default();
        let short = mel_transform(&synth::voice_clip(8, 0.2, SAMPLE_RATE), &mel_cfg).unwrap();
        let long = mel_transform(&synth::voice_clip(8, 0.4, SAMPLE_RATE), &mel_cfg).unwrap();
        let a = voc.generate(&short).unwrap();
        let b = voc.generate(&long).unwrap();
        assert_eq!(a.len(), short.frames * 256);
        assert_eq!(b.len(), long.frames * 256);
    }
}
