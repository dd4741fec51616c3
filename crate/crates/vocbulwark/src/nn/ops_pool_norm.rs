//! Instance normalization and adaptive pooling.

use crate::error::{Error, Result};

use super::tape::{BackFn, GradStore, Tape, Var};
use super::tensor::{sum_lanes, Scalar, Shape, Tensor};

/// Input range covered by output bin `j` when pooling `t` steps down (or up)
/// to `target`. Bins tile the input exactly; when `target > t` bins repeat
/// input elements instead of going empty.
pub(crate) fn pool_bin(j: usize, t: usize, target: usize) -> (usize, usize) {
    let start = j * t / target;
    let end = ((j + 1) * t / target).max(start + 1).min(t.max(start + 1));
    (start, end)
}

impl<S: Scalar> Tape<S> {
    /// Normalize each (batch, channel) slice over time to zero mean and unit
    /// variance (variance floored by `eps`), then apply a per-channel affine.
    pub fn instance_norm(&mut self, x: Var, gain: Var, shift: Var, eps: S) -> Result<Var> {
        let sx = self.val(x).shape();
        if sx.rank != 3 {
            return Err(Error::Shape(format!("instance_norm input {sx:?}")));
        }
        let (bsz, c, t) = (sx.d[0], sx.d[1], sx.d[2]);
        let sg = self.val(gain).shape();
        let ss = self.val(shift).shape();
        if sg != Shape::d1(c) || ss != Shape::d1(c) {
            return Err(Error::Shape(format!("instance_norm affine {sg:?}/{ss:?} for C={c}")));
        }
        let inv_t = S::from_f(1.0 / t as f64);
        let mut data = vec![S::zero(); bsz * c * t];
        {
            let xv = self.val(x).data();
            let gv = self.val(gain).data();
            let sv = self.val(shift).data();
            for bi in 0..bsz {
                for ci in 0..c {
                    let row = &xv[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                    let mu = sum_lanes(row) * inv_t;
                    let mut var = S::zero();
                    for &v in row {
                        let d = v - mu;
                        var += d * d;
                    }
                    var *= inv_t;
                    let inv_std = S::one() / (var + eps).sqrt();
                    let out = &mut data[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                    for (o, &v) in out.iter_mut().zip(row) {
                        *o = gv[ci] * ((v - mu) * inv_std) + sv[ci];
                    }
                }
            }
        }
        let req = self.any_requires_grad(&[x, gain, shift]);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                let xv = vals[x.0].data();
                let gv = vals[gain.0].data();
                let gd = g.data();
                let inv_t = S::from_f(1.0 / t as f64);
                // recompute normalized values per row instead of caching them
                let mut y_row = vec![S::zero(); t];
                for bi in 0..bsz {
                    for ci in 0..c {
                        let row = &xv[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                        let grow = &gd[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                        let mu = sum_lanes(row) * inv_t;
                        let mut var = S::zero();
                        for &v in row {
                            let d = v - mu;
                            var += d * d;
                        }
                        var *= inv_t;
                        let inv_std = S::one() / (var + eps).sqrt();
                        for (y, &v) in y_row.iter_mut().zip(row) {
                            *y = (v - mu) * inv_std;
                        }
                        if gs.wants(gain) {
                            let mut dgain = S::zero();
                            for (gvv, y) in grow.iter().zip(&y_row) {
                                dgain += *gvv * *y;
                            }
                            if let Some(buf) = gs.buf(gain, Shape::d1(c)) {
                                buf[ci] += dgain;
                            }
                        }
                        if gs.wants(shift) {
                            let dshift = sum_lanes(grow);
                            if let Some(buf) = gs.buf(shift, Shape::d1(c)) {
                                buf[ci] += dshift;
                            }
                        }
                        if gs.wants(x) {
                            let mut mean_g = S::zero();
                            let mut mean_gy = S::zero();
                            for (gvv, y) in grow.iter().zip(&y_row) {
                                mean_g += *gvv;
                                mean_gy += *gvv * *y;
                            }
                            mean_g *= inv_t;
                            mean_gy *= inv_t;
                            let scale = gv[ci] * inv_std;
                            if let Some(buf) = gs.buf(x, sx) {
                                let dst = &mut buf[(bi * c + ci) * t..(bi * c + ci + 1) * t];
                                for ((o, &gvv), y) in dst.iter_mut().zip(grow).zip(&y_row) {
                                    *o += scale * (gvv - mean_g - *y * mean_gy);
                                }
                            }
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(sx, data), req, back))
    }

    /// Adaptive average pooling over time to `target` steps.
    pub fn adaptive_avg_pool1d(&mut self, x: Var, target: usize) -> Result<Var> {
        let sx = self.val(x).shape();
        if sx.rank != 3 || target == 0 {
            return Err(Error::Shape(format!("adaptive_avg_pool1d: {sx:?} target {target}")));
        }
        let (bsz, c, t) = (sx.d[0], sx.d[1], sx.d[2]);
        let mut data = vec![S::zero(); bsz * c * target];
        {
            let xv = self.val(x).data();
            for rc in 0..bsz * c {
                let row = &xv[rc * t..(rc + 1) * t];
                for j in 0..target {
                    let (s0, s1) = pool_bin(j, t, target);
                    let inv = S::from_f(1.0 / (s1 - s0) as f64);
                    data[rc * target + j] = sum_lanes(&row[s0..s1]) * inv;
                }
            }
        }
        let req = self.requires_grad(x);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                if let Some(buf) = gs.buf(x, sx) {
                    for rc in 0..bsz * c {
                        for j in 0..target {
                            let (s0, s1) = pool_bin(j, t, target);
                            let share = g.data()[rc * target + j] * S::from_f(1.0 / (s1 - s0) as f64);
                            for o in &mut buf[rc * t + s0..rc * t + s1] {
                                *o += share;
                            }
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(Shape::d3(bsz, c, target), data), req, back))
    }

    /// Adaptive max pooling over time to `target` steps. Ties resolve to the
    /// earliest index so the backward routing is deterministic.
    pub fn adaptive_max_pool1d(&mut self, x: Var, target: usize) -> Result<Var> {
        let sx = self.val(x).shape();
        if sx.rank != 3 || target == 0 {
            return Err(Error::Shape(format!("adaptive_max_pool1d: {sx:?} target {target}")));
        }
        let (bsz, c, t) = (sx.d[0], sx.d[1], sx.d[2]);
        let mut data = vec![S::zero(); bsz * c * target];
        let mut arg = vec![0u32; bsz * c * target];
        {
            let xv = self.val(x).data();
            for rc in 0..bsz * c {
                let row = &xv[rc * t..(rc + 1) * t];
                for j in 0..target {
                    let (s0, s1) = pool_bin(j, t, target);
                    let mut best = row[s0];
                    let mut best_i = s0;
                    for (i, &v) in row.iter().enumerate().take(s1).skip(s0) {
                        if v > best {
                            best = v;
                            best_i = i;
                        }
                    }
                    data[rc * target + j] = best;
                    arg[rc * target + j] = best_i as u32;
                }
            }
        }
        let req = self.requires_grad(x);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                if let Some(buf) = gs.buf(x, sx) {
                    for rc in 0..bsz * c {
                        for j in 0..target {
                            buf[rc * t + arg[rc * target + j] as usize] += g.data()[rc * target + j];
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(Shape::d3(bsz, c, target), data), req, back))
    }
}
