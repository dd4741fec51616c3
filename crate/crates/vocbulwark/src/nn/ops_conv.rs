//! Affine and convolution operators.
//!
//! Strided convolutions are evaluated through a phase decomposition of the
//! zero-padded input: element `xp[t*s + k]` lives at `phase[k % s][t + k/s]`,
//! so every kernel tap becomes a contiguous axpy over the output regardless of
//! stride. The same trick drives the backward passes.

use crate::error::{Error, Result};

use super::tape::{BackFn, GradStore, Tape, Var};
use super::tensor::{dot_lanes, sum_lanes, Scalar, Shape, Tensor};

#[inline]
fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// Phase-decomposed view of a set of padded rows.
///
/// Layout: `data[(c * s + r) * plen + q]` holds padded element `q*s + r` of
/// row `c`. `plen` carries one element of slack so tap offsets never run off
/// the end.
struct Phases<S> {
    data: Vec<S>,
    plen: usize,
    s: usize,
}

impl<S: Scalar> Phases<S> {
    fn zeros(c: usize, tp: usize, s: usize) -> Self {
        let plen = tp / s + 1;
        Phases { data: vec![S::zero(); c * s * plen], plen, s }
    }

    /// Decompose `rows` (`c` rows of raw length `t`) applying zero padding `p`.
    fn from_rows(rows: &[S], c: usize, t: usize, p: usize, s: usize) -> Self {
        let tp = t + 2 * p;
        let mut ph = Phases::zeros(c, tp, s);
        for ci in 0..c {
            let src = &rows[ci * t..(ci + 1) * t];
            for (i, &v) in src.iter().enumerate() {
                let u = i + p;
                ph.data[(ci * s + u % s) * ph.plen + u / s] = v;
            }
        }
        ph
    }

    #[inline]
    fn row(&self, c: usize, r: usize) -> &[S] {
        &self.data[(c * self.s + r) * self.plen..(c * self.s + r + 1) * self.plen]
    }

    #[inline]
    fn row_mut(&mut self, c: usize, r: usize) -> &mut [S] {
        &mut self.data[(c * self.s + r) * self.plen..(c * self.s + r + 1) * self.plen]
    }

    /// Accumulate the interior `[p, p + t)` of padded row `c` into `out`.
    fn fold_interior(&self, c: usize, t: usize, p: usize, out: &mut [S]) {
        for (i, o) in out.iter_mut().enumerate().take(t) {
            let u = i + p;
            *o += self.data[(c * self.s + u % self.s) * self.plen + u / self.s];
        }
    }
}

pub fn conv_out_len(t: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (t + 2 * p >= k).then(|| (t + 2 * p - k) / s + 1)
}

impl<S: Scalar> Tape<S> {
    /// Affine map `W x + b`. Accepts `[in]` or `[B, in]` inputs.
    pub fn fc(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let sx = self.val(x).shape();
        let sw = self.val(w).shape();
        let sb = self.val(b).shape();
        let (bsz, n_in) = match sx.rank {
            1 => (1, sx.d[0]),
            2 => (sx.d[0], sx.d[1]),
            _ => return Err(Error::Shape(format!("fc input {sx:?}"))),
        };
        if sw.rank != 2 || sw.d[1] != n_in || sb.rank != 1 || sb.d[0] != sw.d[0] {
            return Err(Error::Shape(format!("fc: x {sx:?}, w {sw:?}, b {sb:?}")));
        }
        let n_out = sw.d[0];
        let mut data = vec![S::zero(); bsz * n_out];
        {
            let xv = self.val(x).data();
            let wv = self.val(w).data();
            let bv = self.val(b).data();
            for bi in 0..bsz {
                let xrow = &xv[bi * n_in..(bi + 1) * n_in];
                for o in 0..n_out {
                    data[bi * n_out + o] = dot_lanes(&wv[o * n_in..(o + 1) * n_in], xrow) + bv[o];
                }
            }
        }
        let out_shape = if sx.rank == 1 { Shape::d1(n_out) } else { Shape::d2(bsz, n_out) };
        let req = self.any_requires_grad(&[x, w, b]);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                let gv = g.data();
                if gs.wants(x) {
                    let wv = vals[w.0].data();
                    if let Some(dx) = gs.buf(x, sx) {
                        for bi in 0..bsz {
                            let grow = &gv[bi * n_out..(bi + 1) * n_out];
                            let dxrow = &mut dx[bi * n_in..(bi + 1) * n_in];
                            for o in 0..n_out {
                                axpy(grow[o], &wv[o * n_in..(o + 1) * n_in], dxrow);
                            }
                        }
                    }
                }
                if gs.wants(w) {
                    let xv = vals[x.0].data();
                    if let Some(dw) = gs.buf(w, sw) {
                        for bi in 0..bsz {
                            let grow = &gv[bi * n_out..(bi + 1) * n_out];
                            let xrow = &xv[bi * n_in..(bi + 1) * n_in];
                            for o in 0..n_out {
                                axpy(grow[o], xrow, &mut dw[o * n_in..(o + 1) * n_in]);
                            }
                        }
                    }
                }
                if let Some(db) = gs.buf(b, sb) {
                    for bi in 0..bsz {
                        for o in 0..n_out {
                            db[o] += gv[bi * n_out + o];
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(out_shape, data), req, back))
    }

    /// 1-d convolution with zero padding.
    ///
    /// `x: [B, Cin, T]`, `w: [Cout, Cin, K]`, optional `b: [Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let sx = self.val(x).shape();
        let sw = self.val(w).shape();
        if sx.rank != 3 || sw.rank != 3 || sx.d[1] != sw.d[1] {
            return Err(Error::Shape(format!("conv1d: x {sx:?}, w {sw:?}")));
        }
        let (bsz, cin, t) = (sx.d[0], sx.d[1], sx.d[2]);
        let (cout, k) = (sw.d[0], sw.d[2]);
        if let Some(bv) = b {
            let sb = self.val(bv).shape();
            if sb.rank != 1 || sb.d[0] != cout {
                return Err(Error::Shape(format!("conv1d bias {sb:?}, cout {cout}")));
            }
        }
        let t_out = conv_out_len(t, k, stride, pad)
            .ok_or_else(|| Error::Shape(format!("conv1d: kernel {k} exceeds padded input {}", t + 2 * pad)))?;

        let mut data = vec![S::zero(); bsz * cout * t_out];
        {
            let xv = self.val(x).data();
            let wv = self.val(w).data();
            for bi in 0..bsz {
                let ph = Phases::from_rows(&xv[bi * cin * t..(bi + 1) * cin * t], cin, t, pad, stride);
                for co in 0..cout {
                    let orow = &mut data[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                    for ci in 0..cin {
                        for kk in 0..k {
                            let wgt = wv[(co * cin + ci) * k + kk];
                            let src = &ph.row(ci, kk % stride.max(1))[kk / stride.max(1)..];
                            axpy(wgt, &src[..t_out], orow);
                        }
                    }
                }
                if let Some(bvar) = b {
                    let bv = self.val(bvar).data();
                    for co in 0..cout {
                        let orow = &mut data[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                        for o in orow.iter_mut() {
                            *o += bv[co];
                        }
                    }
                }
            }
        }

        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        let req = self.any_requires_grad(&parents);
        let out_shape = Shape::d3(bsz, cout, t_out);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                let s = stride.max(1);
                let gv = g.data();
                if gs.wants(x) {
                    let wv = vals[w.0].data();
                    if let Some(dx) = gs.buf(x, sx) {
                        for bi in 0..bsz {
                            let mut dph = Phases::zeros(cin, t + 2 * pad, s);
                            for co in 0..cout {
                                let grow = &gv[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                                for ci in 0..cin {
                                    for kk in 0..k {
                                        let wgt = wv[(co * cin + ci) * k + kk];
                                        let dst = &mut dph.row_mut(ci, kk % s)[kk / s..kk / s + t_out];
                                        axpy(wgt, grow, dst);
                                    }
                                }
                            }
                            for ci in 0..cin {
                                dph.fold_interior(ci, t, pad, &mut dx[(bi * cin + ci) * t..(bi * cin + ci + 1) * t]);
                            }
                        }
                    }
                }
                if gs.wants(w) {
                    let xv = vals[x.0].data();
                    if let Some(dw) = gs.buf(w, sw) {
                        for bi in 0..bsz {
                            let ph = Phases::from_rows(&xv[bi * cin * t..(bi + 1) * cin * t], cin, t, pad, s);
                            for co in 0..cout {
                                let grow = &gv[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                                for ci in 0..cin {
                                    for kk in 0..k {
                                        let src = &ph.row(ci, kk % s)[kk / s..kk / s + t_out];
                                        dw[(co * cin + ci) * k + kk] += dot_lanes(grow, src);
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(bvar) = b {
                    if let Some(db) = gs.buf(bvar, Shape::d1(cout)) {
                        for bi in 0..bsz {
                            for co in 0..cout {
                                db[co] +=
                                    sum_lanes(&gv[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out]);
                            }
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(out_shape, data), req, back))
    }

    /// Per-channel (depthwise) 1-d convolution, no bias.
    ///
    /// `x: [B, C, T]`, `w: [C, K]`.
    pub fn depthwise_conv1d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let sx = self.val(x).shape();
        let sw = self.val(w).shape();
        if sx.rank != 3 || sw.rank != 2 || sx.d[1] != sw.d[0] {
            return Err(Error::Shape(format!("depthwise_conv1d: x {sx:?}, w {sw:?}")));
        }
        let (bsz, c, t) = (sx.d[0], sx.d[1], sx.d[2]);
        let k = sw.d[1];
        let t_out = conv_out_len(t, k, stride, pad)
            .ok_or_else(|| Error::Shape(format!("depthwise: kernel {k} exceeds padded input {}", t + 2 * pad)))?;

        let mut data = vec![S::zero(); bsz * c * t_out];
        {
            let xv = self.val(x).data();
            let wv = self.val(w).data();
            let s = stride.max(1);
            for bi in 0..bsz {
                let ph = Phases::from_rows(&xv[bi * c * t..(bi + 1) * c * t], c, t, pad, s);
                for ci in 0..c {
                    let orow = &mut data[(bi * c + ci) * t_out..(bi * c + ci + 1) * t_out];
                    for kk in 0..k {
                        let src = &ph.row(ci, kk % s)[kk / s..kk / s + t_out];
                        axpy(wv[ci * k + kk], src, orow);
                    }
                }
            }
        }

        let req = self.any_requires_grad(&[x, w]);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                let s = stride.max(1);
                let gv = g.data();
                if gs.wants(x) {
                    let wv = vals[w.0].data();
                    if let Some(dx) = gs.buf(x, sx) {
                        for bi in 0..bsz {
                            let mut dph = Phases::zeros(c, t + 2 * pad, s);
                            for ci in 0..c {
                                let grow = &gv[(bi * c + ci) * t_out..(bi * c + ci + 1) * t_out];
                                for kk in 0..k {
                                    let dst = &mut dph.row_mut(ci, kk % s)[kk / s..kk / s + t_out];
                                    axpy(wv[ci * k + kk], grow, dst);
                                }
                            }
                            for ci in 0..c {
                                dph.fold_interior(ci, t, pad, &mut dx[(bi * c + ci) * t..(bi * c + ci + 1) * t]);
                            }
                        }
                    }
                }
                if gs.wants(w) {
                    let xv = vals[x.0].data();
                    if let Some(dw) = gs.buf(w, sw) {
                        for bi in 0..bsz {
                            let ph = Phases::from_rows(&xv[bi * c * t..(bi + 1) * c * t], c, t, pad, s);
                            for ci in 0..c {
                                let grow = &gv[(bi * c + ci) * t_out..(bi * c + ci + 1) * t_out];
                                for kk in 0..k {
                                    let src = &ph.row(ci, kk % s)[kk / s..kk / s + t_out];
                                    dw[ci * k + kk] += dot_lanes(grow, src);
                                }
                            }
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(Shape::d3(bsz, c, t_out), data), req, back))
    }

    /// Transposed 1-d convolution (fractional-stride upsampling).
    ///
    /// `x: [B, Cin, T]`, `w: [Cin, Cout, K]`; output length `(T-1)*s + K - 2p`.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let sx = self.val(x).shape();
        let sw = self.val(w).shape();
        if sx.rank != 3 || sw.rank != 3 || sx.d[1] != sw.d[0] {
            return Err(Error::Shape(format!("conv_transpose1d: x {sx:?}, w {sw:?}")));
        }
        let (bsz, cin, t) = (sx.d[0], sx.d[1], sx.d[2]);
        let (cout, k) = (sw.d[1], sw.d[2]);
        let s = stride.max(1);
        let t_full = (t - 1) * s + k;
        if t_full < 2 * pad + 1 {
            return Err(Error::Shape("conv_transpose1d: padding exceeds output".into()));
        }
        let t_out = t_full - 2 * pad;
        if let Some(bv) = b {
            let sb = self.val(bv).shape();
            if sb.rank != 1 || sb.d[0] != cout {
                return Err(Error::Shape(format!("conv_transpose1d bias {sb:?}")));
            }
        }

        let mut data = vec![S::zero(); bsz * cout * t_out];
        {
            let xv = self.val(x).data();
            let wv = self.val(w).data();
            for bi in 0..bsz {
                // scatter into the full (unpadded) output through output phases
                let mut yph = Phases::zeros(cout, t_full, s);
                for ci in 0..cin {
                    let xrow = &xv[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                    for co in 0..cout {
                        for kk in 0..k {
                            let wgt = wv[(ci * cout + co) * k + kk];
                            let dst = &mut yph.row_mut(co, kk % s)[kk / s..kk / s + t];
                            axpy(wgt, xrow, dst);
                        }
                    }
                }
                for co in 0..cout {
                    yph.fold_interior(co, t_out, pad, &mut data[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out]);
                }
                if let Some(bvar) = b {
                    let bv = self.val(bvar).data();
                    for co in 0..cout {
                        for o in &mut data[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out] {
                            *o += bv[co];
                        }
                    }
                }
            }
        }

        let parents: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        let req = self.any_requires_grad(&parents);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut GradStore<S>| {
                let gv = g.data();
                // dy embedded in the full output grid, phase-decomposed
                let build_gph = |bi: usize| {
                    let mut rows = vec![S::zero(); cout * t_full];
                    for co in 0..cout {
                        rows[co * t_full + pad..co * t_full + pad + t_out]
                            .copy_from_slice(&gv[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out]);
                    }
                    Phases::from_rows(&rows, cout, t_full, 0, s)
                };
                if gs.wants(x) {
                    let wv = vals[w.0].data();
                    if let Some(dx) = gs.buf(x, sx) {
                        for bi in 0..bsz {
                            let gph = build_gph(bi);
                            for ci in 0..cin {
                                let dxrow = &mut dx[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                                for co in 0..cout {
                                    for kk in 0..k {
                                        let wgt = wv[(ci * cout + co) * k + kk];
                                        let src = &gph.row(co, kk % s)[kk / s..kk / s + t];
                                        axpy(wgt, src, dxrow);
                                    }
                                }
                            }
                        }
                    }
                }
                if gs.wants(w) {
                    let xv = vals[x.0].data();
                    if let Some(dw) = gs.buf(w, sw) {
                        for bi in 0..bsz {
                            let gph = build_gph(bi);
                            for ci in 0..cin {
                                let xrow = &xv[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                                for co in 0..cout {
                                    for kk in 0..k {
                                        let src = &gph.row(co, kk % s)[kk / s..kk / s + t];
                                        dw[(ci * cout + co) * k + kk] += dot_lanes(xrow, src);
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(bvar) = b {
                    if let Some(db) = gs.buf(bvar, Shape::d1(cout)) {
                        for bi in 0..bsz {
                            for co in 0..cout {
                                db[co] +=
                                    sum_lanes(&gv[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out]);
                            }
                        }
                    }
                }
            }) as BackFn<S>
        });
        Ok(self.push(Tensor::new(Shape::d3(bsz, cout, t_out), data), req, back))
    }

    /// Depthwise-separable convolution: per-channel depthwise pass followed by
    /// a pointwise (k=1) channel-mixing convolution carrying the bias.
    pub fn depthwise_separable_conv1d(
        &mut self,
        x: Var,
        dw_weight: Var,
        pw_weight: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let mid = self.depthwise_conv1d(x, dw_weight, stride, pad)?;
        self.conv1d(mid, pw_weight, Some(bias), 1, 0)
    }
}
