//! Elementwise operations, reductions, and shape plumbing.

use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::{Scalar, Shape, Tensor};

impl<S: Scalar> Tape<S> {
    fn check_same_shape(&self, a: Var, b: Var, op: &str) -> Result<Shape> {
        let sa = self.val(a).shape();
        let sb = self.val(b).shape();
        if sa != sb {
            return Err(Error::Shape(format!("{op}: {sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.check_same_shape(a, b, "add")?;
        let data = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let req = self.any_requires_grad(&[a, b]);
        let back = req.then(|| {
            Box::new(move |_vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                gs.add(a, g);
                gs.add(b, g);
            }) as super::tape::BackFn<S>
        });
        Ok(self.push(Tensor::new(shape, data), req, back))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.check_same_shape(a, b, "sub")?;
        let data = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(&x, &y)| x - y)
            .collect();
        let req = self.any_requires_grad(&[a, b]);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                gs.add(a, g);
                if let Some(buf) = gs.buf(b, g.shape()) {
                    for (o, &gv) in buf.iter_mut().zip(g.data()) {
                        *o -= gv;
                    }
                }
            }) as super::tape::BackFn<S>
        });
        Ok(self.push(Tensor::new(shape, data), req, back))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.check_same_shape(a, b, "mul")?;
        let data = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let req = self.any_requires_grad(&[a, b]);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if gs.wants(a) {
                    let bv = &vals[b.0];
                    if let Some(buf) = gs.buf(a, g.shape()) {
                        for ((o, &gv), &bx) in buf.iter_mut().zip(g.data()).zip(bv.data()) {
                            *o += gv * bx;
                        }
                    }
                }
                if gs.wants(b) {
                    let av = &vals[a.0];
                    if let Some(buf) = gs.buf(b, g.shape()) {
                        for ((o, &gv), &ax) in buf.iter_mut().zip(g.data()).zip(av.data()) {
                            *o += gv * ax;
                        }
                    }
                }
            }) as super::tape::BackFn<S>
        });
        Ok(self.push(Tensor::new(shape, data), req, back))
    }

    pub fn add_scalar(&mut self, a: Var, c: S) -> Var {
        let out = self.val(a).map(|x| x + c);
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                gs.add(a, g);
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    pub fn mul_scalar(&mut self, a: Var, c: S) -> Var {
        let out = self.val(a).map(|x| x * c);
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for (o, &gv) in buf.iter_mut().zip(g.data()) {
                        *o += gv * c;
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    /// Add a fixed tensor (no gradient on the addend).
    pub fn add_const(&mut self, a: Var, c: &Tensor<S>) -> Result<Var> {
        if self.val(a).shape() != c.shape() {
            return Err(Error::Shape(format!(
                "add_const: {:?} vs {:?}",
                self.val(a).shape(),
                c.shape()
            )));
        }
        let data = self
            .val(a)
            .data()
            .iter()
            .zip(c.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = c.shape();
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                gs.add(a, g);
            }) as super::tape::BackFn<S>
        });
        Ok(self.push(Tensor::new(shape, data), req, back))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x.abs());
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for ((o, &gv), &x) in buf.iter_mut().zip(g.data()).zip(vals[a.0].data()) {
                        let s = if x > S::zero() {
                            S::one()
                        } else if x < S::zero() {
                            -S::one()
                        } else {
                            S::zero()
                        };
                        *o += gv * s;
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    /// Natural logarithm; the caller is responsible for keeping inputs positive.
    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x.ln());
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for ((o, &gv), &x) in buf.iter_mut().zip(g.data()).zip(vals[a.0].data()) {
                        *o += gv / x;
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    /// `sqrt(x + eps)`; eps keeps the derivative finite at zero.
    pub fn sqrt_eps(&mut self, a: Var, eps: S) -> Var {
        let out = self.val(a).map(|x| (x + eps).sqrt());
        let req = self.requires_grad(a);
        let idx = self.next_idx();
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                let half = S::from_f(0.5);
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for ((o, &gv), &y) in buf.iter_mut().zip(g.data()).zip(vals[idx].data()) {
                        *o += gv * half / y;
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    /// Clamp to `[lo, hi]`; gradient passes inside the range, zero outside.
    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Var {
        let out = self.val(a).map(|x| x.max(lo).min(hi));
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for ((o, &gv), &x) in buf.iter_mut().zip(g.data()).zip(vals[a.0].data()) {
                        if x >= lo && x <= hi {
                            *o += gv;
                        }
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| S::one() / (S::one() + (-x).exp()));
        let req = self.requires_grad(a);
        let idx = self.next_idx();
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for ((o, &gv), &y) in buf.iter_mut().zip(g.data()).zip(vals[idx].data()) {
                        *o += gv * y * (S::one() - y);
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    pub fn tanh_act(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x.tanh());
        let req = self.requires_grad(a);
        let idx = self.next_idx();
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for ((o, &gv), &y) in buf.iter_mut().zip(g.data()).zip(vals[idx].data()) {
                        *o += gv * (S::one() - y * y);
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: S) -> Var {
        let out = self.val(a).map(|x| if x >= S::zero() { x } else { x * alpha });
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for ((o, &gv), &x) in buf.iter_mut().zip(g.data()).zip(vals[a.0].data()) {
                        *o += gv * if x >= S::zero() { S::one() } else { alpha };
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x / (S::one() + (-x).exp()));
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |vals: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, g.shape()) {
                    for ((o, &gv), &x) in buf.iter_mut().zip(g.data()).zip(vals[a.0].data()) {
                        let s = S::one() / (S::one() + (-x).exp());
                        *o += gv * s * (S::one() + x * (S::one() - s));
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(out, req, back)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total = super::tensor::sum_lanes(self.val(a).data());
        let shape = self.val(a).shape();
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                let gv = g.item();
                if let Some(buf) = gs.buf(a, shape) {
                    for o in buf.iter_mut() {
                        *o += gv;
                    }
                }
            }) as super::tape::BackFn<S>
        });
        self.push(Tensor::scalar(total), req, back)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.val(a).shape().numel();
        let inv = S::from_f(1.0 / n as f64);
        let s = self.sum_all(a);
        self.mul_scalar(s, inv)
    }

    pub fn reshape(&mut self, a: Var, shape: Shape) -> Result<Var> {
        let old = self.val(a).shape();
        if old.numel() != shape.numel() {
            return Err(Error::Shape(format!("reshape: {old:?} -> {shape:?}")));
        }
        let out = self.val(a).clone().reshaped(shape);
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, old) {
                    for (o, &gv) in buf.iter_mut().zip(g.data()) {
                        *o += gv;
                    }
                }
            }) as super::tape::BackFn<S>
        });
        Ok(self.push(out, req, back))
    }

    /// Contiguous slice of a rank-1 tensor.
    pub fn slice1(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.val(a).shape();
        if shape.rank != 1 || start + len > shape.d[0] {
            return Err(Error::Shape(format!(
                "slice1: [{start}..{}] of {shape:?}",
                start + len
            )));
        }
        let out = Tensor::from_vec(self.val(a).data()[start..start + len].to_vec());
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, shape) {
                    for (o, &gv) in buf[start..start + len].iter_mut().zip(g.data()) {
                        *o += gv;
                    }
                }
            }) as super::tape::BackFn<S>
        });
        Ok(self.push(out, req, back))
    }

    /// Concatenate two rank-3 tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.val(a).shape();
        let sb = self.val(b).shape();
        if sa.rank != 3 || sb.rank != 3 || sa.d[0] != sb.d[0] || sa.d[2] != sb.d[2] {
            return Err(Error::Shape(format!("concat_channels: {sa:?} vs {sb:?}")));
        }
        let (bsz, ca, cb, t) = (sa.d[0], sa.d[1], sb.d[1], sa.d[2]);
        let out_shape = Shape::d3(bsz, ca + cb, t);
        let mut data = Vec::with_capacity(out_shape.numel());
        for bi in 0..bsz {
            data.extend_from_slice(&self.val(a).data()[bi * ca * t..(bi + 1) * ca * t]);
            data.extend_from_slice(&self.val(b).data()[bi * cb * t..(bi + 1) * cb * t]);
        }
        let req = self.any_requires_grad(&[a, b]);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                let chunk = (ca + cb) * t;
                if let Some(buf) = gs.buf(a, Shape::d3(bsz, ca, t)) {
                    for bi in 0..bsz {
                        let src = &g.data()[bi * chunk..bi * chunk + ca * t];
                        for (o, &gv) in buf[bi * ca * t..(bi + 1) * ca * t].iter_mut().zip(src) {
                            *o += gv;
                        }
                    }
                }
                if let Some(buf) = gs.buf(b, Shape::d3(bsz, cb, t)) {
                    for bi in 0..bsz {
                        let src = &g.data()[bi * chunk + ca * t..(bi + 1) * chunk];
                        for (o, &gv) in buf[bi * cb * t..(bi + 1) * cb * t].iter_mut().zip(src) {
                            *o += gv;
                        }
                    }
                }
            }) as super::tape::BackFn<S>
        });
        Ok(self.push(Tensor::new(out_shape, data), req, back))
    }

    /// Replicate a per-channel vector over `t` time steps.
    ///
    /// Accepts `[C]` (treated as batch 1) or `[B, C]`; returns `[B, C, t]` where
    /// every time index holds an identical copy.
    pub fn broadcast_time(&mut self, a: Var, t: usize) -> Result<Var> {
        let sa = self.val(a).shape();
        let (bsz, c) = match sa.rank {
            1 => (1, sa.d[0]),
            2 => (sa.d[0], sa.d[1]),
            _ => return Err(Error::Shape(format!("broadcast_time: {sa:?}"))),
        };
        if t == 0 {
            return Err(Error::Invalid("broadcast_time: t must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(bsz * c * t);
        for &v in self.val(a).data() {
            data.extend(std::iter::repeat(v).take(t));
        }
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                if let Some(buf) = gs.buf(a, sa) {
                    for (i, o) in buf.iter_mut().enumerate() {
                        *o += super::tensor::sum_lanes(&g.data()[i * t..(i + 1) * t]);
                    }
                }
            }) as super::tape::BackFn<S>
        });
        Ok(self.push(Tensor::new(Shape::d3(bsz, c, t), data), req, back))
    }

    /// Apply an arbitrary (typically non-differentiable) same-length transform
    /// with an identity backward pass.
    pub fn straight_through<F>(&mut self, a: Var, f: F) -> Var
    where
        F: Fn(&[S]) -> Vec<S>,
    {
        let shape = self.val(a).shape();
        let data = f(self.val(a).data());
        assert_eq!(data.len(), shape.numel(), "straight_through must preserve length");
        let req = self.requires_grad(a);
        let back = req.then(|| {
            Box::new(move |_: &[Tensor<S>], g: &Tensor<S>, gs: &mut super::tape::GradStore<S>| {
                gs.add(a, g);
            }) as super::tape::BackFn<S>
        });
        self.push(Tensor::new(shape, data), req, back)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tape::Tape;
    use super::super::tensor::Tensor;

    #[test]
    fn add_mul_values_and_grads() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::from_vec(vec![3.0, 4.0]));
        let p = tape.mul(a, b).unwrap();
        let s = tape.sum_all(p);
        assert_eq!(tape.val(s).item(), 11.0);
        let mut gs = tape.backward(s);
        assert_eq!(gs.take(a).unwrap().data(), &[3.0, 4.0]);
        assert_eq!(gs.take(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::from_vec(vec![5.0, 5.0]));
        let y = tape.add(a, b).unwrap();
        let s = tape.sum_all(y);
        let mut gs = tape.backward(s);
        assert!(gs.take(a).is_none());
        assert_eq!(gs.take(b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn activations_match_definitions() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let lr = tape.leaky_relu(x, 0.01);
        assert_eq!(tape.val(lr).data(), &[-0.01, 0.0, 2.0]);
        let sg = tape.sigmoid(x);
        assert!((tape.val(sg).data()[1] - 0.5).abs() < 1e-15);
        let si = tape.silu(x);
        assert_eq!(tape.val(si).data()[1], 0.0);
        // sigmoid(x) + sigmoid(-x) = 1
        let xn = tape.mul_scalar(x, -1.0);
        let sgn = tape.sigmoid(xn);
        for (a, b) in tape.val(sg).data().iter().zip(tape.val(sgn).data()) {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn broadcast_columns_identical() {
        let mut tape = Tape::<f32>::new();
        let v = tape.leaf(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
        let b = tape.broadcast_time(v, 7).unwrap();
        let t = tape.val(b);
        for c in 0..3 {
            for ti in 0..7 {
                assert_eq!(t.at3(0, c, ti), t.at3(0, c, 0));
            }
        }
    }

    #[test]
    fn slice_grad_zero_extends() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let sl = tape.slice1(a, 1, 2).unwrap();
        let s = tape.sum_all(sl);
        let mut gs = tape.backward(s);
        assert_eq!(gs.take(a).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
    }
}
