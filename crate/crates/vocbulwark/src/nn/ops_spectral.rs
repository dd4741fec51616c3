//! Differentiable spectral analysis and waveform-domain helper ops.
//!
//! `stft_power` is the only op with a nontrivial adjoint: the DFT is linear,
//! so the backward pass routes the power gradient through an un-normalized
//! inverse FFT of the (upper-half zeroed) gradient spectrum.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::tape::{BackFn, GradStore, Tape, Var};
use super::tensor::{Scalar, Shape, Tensor};

/// Edge handling for [`Tape::pad1d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// Mirror excluding the edge sample: `[a b c] -> [b a | a b c | c b]`.
    Reflect,
    /// Mirror including the edge sample: `[a b c] -> [b a | a b c | c b]` is
    /// reflect; symmetric gives `[a a | a b c | c c]` for pad 2... i.e. the
    /// edge sample repeats.
    Symmetric,
}

impl<S: Scalar> Tape<S> {
    /// Pad a rank-1 signal on both ends by mirroring.
    pub fn pad1d(&mut self, x: Var, left: usize, right: usize, mode: PadMode) -> Result<Var> {
        let sx = self.val(x).shape();
        if sx.rank != 1 {
            return Err(Error::Shape(format!("pad1d input {sx:?}")));
        }
        let t = sx.d[0];
        let limit = match mode {
            PadMode::Reflect => t.saturating_sub(1),
            PadMode::Symmetric => t,
        };
        if left > limit || right > limit {
            return Err(Error::Invalid(format!(
                "pad1d: pad ({left},{right}) too large for length {t}"
            )));
        }
        let mut map = Vec::with_capacity(left + t + right);
        for i in 0..left {
            map.push(match mode {
                PadMode::Reflect => left - i,
                PadMode::Symmetric => left - 1 - i,
            } as u32);
        }
        for i in 0..t {
            map.push(i as u32);
        }
        for j in 0..right {
            map.push(match mode {
                PadMode::Reflect => t - 2 - j,
                PadMode::Symmetric => t - 1 - j,
            } as u32);
        }
        let xv = self.val(x).data();
        let data: Vec<S> = map.iter().map(|&i| xv[i as usize]).collect();
        let req = self.requires_grad(x);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                if let Some(buf) = gs.buf(x, sx) {
                    for (&src, &gv) in map.iter().zip(g.data()) {
                        buf[src as usize] += gv;
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::from_vec(data), req, back))
    }

    /// Power spectrogram of a rank-1 signal: `|STFT|^2`, shape `[fft/2+1, F]`
    /// with `F = (T - win)/hop + 1` (no implicit padding; pad first if the
    /// centered framing is wanted).
    pub fn stft_power(&mut self, x: Var, fft_size: usize, hop: usize, window: Arc<Vec<S>>) -> Result<Var> {
        let sx = self.val(x).shape();
        let win = window.len();
        if sx.rank != 1 || win == 0 || hop == 0 || fft_size < win {
            return Err(Error::Shape(format!(
                "stft_power: input {sx:?}, fft {fft_size}, win {win}, hop {hop}"
            )));
        }
        let t = sx.d[0];
        if t < win {
            return Err(Error::Invalid(format!("stft_power: input {t} shorter than window {win}")));
        }
        let frames = (t - win) / hop + 1;
        let bins = fft_size / 2 + 1;

        let fwd = FftPlanner::<S>::new().plan_fft_forward(fft_size);
        let mut spectra = vec![Complex::new(S::zero(), S::zero()); frames * bins];
        let mut data = vec![S::zero(); bins * frames];
        {
            let xv = self.val(x).data();
            let mut buf = vec![Complex::new(S::zero(), S::zero()); fft_size];
            for f in 0..frames {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = if j < win {
                        Complex::new(xv[f * hop + j] * window[j], S::zero())
                    } else {
                        Complex::new(S::zero(), S::zero())
                    };
                }
                fwd.process(&mut buf);
                for k in 0..bins {
                    spectra[f * bins + k] = buf[k];
                    data[k * frames + f] = buf[k].re * buf[k].re + buf[k].im * buf[k].im;
                }
            }
        }

        let req = self.requires_grad(x);
        let back = req.then(|| {
            let inv = FftPlanner::<S>::new().plan_fft_inverse(fft_size);
            let window = Arc::clone(&window);
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                if let Some(buf) = gs.buf(x, sx) {
                    let two = S::from_f(2.0);
                    let mut gbuf = vec![Complex::new(S::zero(), S::zero()); fft_size];
                    for f in 0..frames {
                        for gb in gbuf.iter_mut() {
                            *gb = Complex::new(S::zero(), S::zero());
                        }
                        for k in 0..bins {
                            let gp = g.data()[k * frames + f];
                            let sp = spectra[f * bins + k];
                            gbuf[k] = Complex::new(two * gp * sp.re, two * gp * sp.im);
                        }
                        inv.process(&mut gbuf);
                        for j in 0..win {
                            buf[f * hop + j] += window[j] * gbuf[j].re;
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(Shape::d2(bins, frames), data), req, back))
    }

    /// Multiply by a fixed matrix on the left: `M (m x k) * x (k x f)`.
    pub fn matmul_const(&mut self, m: Arc<Tensor<S>>, x: Var) -> Result<Var> {
        let sm = m.shape();
        let sx = self.val(x).shape();
        if sm.rank != 2 || sx.rank != 2 || sm.d[1] != sx.d[0] {
            return Err(Error::Shape(format!("matmul_const: M {sm:?}, x {sx:?}")));
        }
        let (rows, inner, f) = (sm.d[0], sm.d[1], sx.d[1]);
        let mut data = vec![S::zero(); rows * f];
        {
            let xv = self.val(x).data();
            for i in 0..rows {
                let orow = &mut data[i * f..(i + 1) * f];
                for l in 0..inner {
                    let coef = m.data()[i * inner + l];
                    if coef != S::zero() {
                        for (o, &xvv) in orow.iter_mut().zip(&xv[l * f..(l + 1) * f]) {
                            *o += coef * xvv;
                        }
                    }
                }
            }
        }
        let req = self.requires_grad(x);
        let back = req.then(|| {
            let m = Arc::clone(&m);
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                if let Some(buf) = gs.buf(x, sx) {
                    for l in 0..inner {
                        let dst = &mut buf[l * f..(l + 1) * f];
                        for i in 0..rows {
                            let coef = m.data()[i * inner + l];
                            if coef != S::zero() {
                                for (o, &gv) in dst.iter_mut().zip(&g.data()[i * f..(i + 1) * f]) {
                                    *o += coef * gv;
                                }
                            }
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(Shape::d2(rows, f), data), req, back))
    }

    /// Correlation with a fixed tap vector, valid range only:
    /// `y[t] = sum_k taps[k] * x[t+k]`, length `T - K + 1`.
    pub fn fir_valid(&mut self, x: Var, taps: Arc<Vec<S>>) -> Result<Var> {
        let sx = self.val(x).shape();
        let k = taps.len();
        if sx.rank != 1 || sx.d[0] < k || k == 0 {
            return Err(Error::Shape(format!("fir_valid: input {sx:?}, taps {k}")));
        }
        let t_out = sx.d[0] - k + 1;
        let mut data = vec![S::zero(); t_out];
        {
            let xv = self.val(x).data();
            for (kk, &w) in taps.iter().enumerate() {
                for (o, &xvv) in data.iter_mut().zip(&xv[kk..kk + t_out]) {
                    *o += w * xvv;
                }
            }
        }
        let req = self.requires_grad(x);
        let back = req.then(|| {
            let taps = Arc::clone(&taps);
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                if let Some(buf) = gs.buf(x, sx) {
                    for (kk, &w) in taps.iter().enumerate() {
                        for (o, &gv) in buf[kk..kk + t_out].iter_mut().zip(g.data()) {
                            *o += w * gv;
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::from_vec(data), req, back))
    }

    /// Single-tap feedback-free echo: `y[t] = x[t] + decay * x[t - delay]`.
    pub fn echo_op(&mut self, x: Var, delay: usize, decay: S) -> Result<Var> {
        let sx = self.val(x).shape();
        if sx.rank != 1 {
            return Err(Error::Shape(format!("echo_op input {sx:?}")));
        }
        let t = sx.d[0];
        let xv = self.val(x).data();
        let mut data = xv.to_vec();
        if delay < t {
            for i in delay..t {
                data[i] += decay * xv[i - delay];
            }
        }
        let req = self.requires_grad(x);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                if let Some(buf) = gs.buf(x, sx) {
                    for (o, &gv) in buf.iter_mut().zip(g.data()) {
                        *o += gv;
                    }
                    if delay < t {
                        for i in delay..t {
                            buf[i - delay] += decay * g.data()[i];
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::from_vec(data), req, back))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::tape::Tape;
    use super::super::tensor::{Shape, Tensor};
    use super::PadMode;

    #[test]
    fn pad_modes_mirror_correctly() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let r = tape.pad1d(x, 2, 2, PadMode::Reflect).unwrap();
        assert_eq!(tape.val(r).data(), &[3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
        let s = tape.pad1d(x, 2, 2, PadMode::Symmetric).unwrap();
        assert_eq!(tape.val(s).data(), &[2.0, 1.0, 1.0, 2.0, 3.0, 4.0, 4.0, 3.0]);
    }

    #[test]
    fn pad_backward_folds_back() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let p = tape.pad1d(x, 1, 1, PadMode::Reflect).unwrap();
        let s = tape.sum_all(p);
        let mut gs = tape.backward(s);
        // out = [x1, x0, x1, x2, x1] -> dx = [1, 3, 1]
        assert_eq!(gs.take(x).unwrap().data(), &[1.0, 3.0, 1.0]);
    }

    #[test]
    fn stft_power_of_zero_is_zero() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_vec(vec![0.0f32; 64]));
        let w = Arc::new(vec![1.0f32; 16]);
        let p = tape.stft_power(x, 16, 4, w).unwrap();
        assert!(tape.val(p).data().iter().all(|&v| v == 0.0));
        assert_eq!(tape.val(p).shape(), Shape::d2(9, 13));
    }

    #[test]
    fn stft_power_sine_peaks_at_bin() {
        // bin-centered sine at k=4 of a 32-point DFT
        let n = 32;
        let t = 128;
        let xs: Vec<f64> = (0..t)
            .map(|i| (2.0 * std::f64::consts::PI * 4.0 * i as f64 / n as f64).sin())
            .collect();
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_vec(xs));
        let w = Arc::new(vec![1.0f64; n]);
        let p = tape.stft_power(x, n, n, w).unwrap();
        let frames = (t - n) / n + 1;
        for f in 0..frames {
            let col: Vec<f64> = (0..n / 2 + 1).map(|k| tape.val(p).at2(k, f)).collect();
            let max_k = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(max_k, 4);
        }
    }

    #[test]
    fn fir_valid_matches_naive() {
        let mut tape = Tape::<f64>::new();
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let x = tape.leaf(Tensor::from_vec(xs.clone()));
        let taps = Arc::new(vec![0.5, -1.0, 0.25]);
        let y = tape.fir_valid(x, Arc::clone(&taps)).unwrap();
        for t in 0..8 {
            let expect: f64 = (0..3).map(|k| taps[k] * xs[t + k]).sum();
            assert!((tape.val(y).data()[t] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn echo_impulse_response() {
        let mut tape = Tape::<f64>::new();
        let mut xs = vec![0.0; 10];
        xs[0] = 1.0;
        let x = tape.leaf(Tensor::from_vec(xs));
        let y = tape.echo_op(x, 4, 0.3).unwrap();
        assert_eq!(tape.val(y).data()[0], 1.0);
        assert_eq!(tape.val(y).data()[4], 0.3);
        assert!(tape.val(y).data()[1..4].iter().all(|&v| v == 0.0));
    }
}
