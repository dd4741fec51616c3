//! Dense tensors of rank 1..=3 with a row-major layout.
//!
//! Rank-3 tensors follow the (batch, channels, time) convention used by every
//! network in this crate. The scalar type is generic so the training path can
//! run in f32 while gradient checks run in f64.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type usable by the tensor and autodiff machinery.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + Default
    + fmt::Debug
    + fmt::Display
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + 'static
{
    fn from_f(x: f64) -> Self;
    fn to_f64x(self) -> f64;
}

impl Scalar for f32 {
    fn from_f(x: f64) -> Self {
        x as f32
    }
    fn to_f64x(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f(x: f64) -> Self {
        x
    }
    fn to_f64x(self) -> f64 {
        self
    }
}

/// Shape of a tensor; dims beyond `rank` are fixed to 1.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub rank: u8,
    pub d: [usize; 3],
}

impl Shape {
    pub fn d1(n: usize) -> Self {
        Shape { rank: 1, d: [n, 1, 1] }
    }
    pub fn d2(a: usize, b: usize) -> Self {
        Shape { rank: 2, d: [a, b, 1] }
    }
    pub fn d3(b: usize, c: usize, t: usize) -> Self {
        Shape { rank: 3, d: [b, c, t] }
    }
    pub fn numel(&self) -> usize {
        self.d[0] * self.d[1] * self.d[2]
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rank {
            1 => write!(f, "[{}]", self.d[0]),
            2 => write!(f, "[{}x{}]", self.d[0], self.d[1]),
            _ => write!(f, "[{}x{}x{}]", self.d[0], self.d[1], self.d[2]),
        }
    }
}

/// A dense tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor<S = f32> {
    shape: Shape,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Shape, data: Vec<S>) -> Self {
        assert_eq!(shape.numel(), data.len(), "shape/data length mismatch");
        Tensor { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, data: vec![S::zero(); shape.numel()] }
    }

    pub fn full(shape: Shape, v: S) -> Self {
        Tensor { shape, data: vec![v; shape.numel()] }
    }

    pub fn scalar(v: S) -> Self {
        Tensor { shape: Shape::d1(1), data: vec![v] }
    }

    pub fn from_vec(data: Vec<S>) -> Self {
        Tensor { shape: Shape::d1(data.len()), data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Index into a rank-3 tensor.
    pub fn at3(&self, b: usize, c: usize, t: usize) -> S {
        let d = self.shape.d;
        self.data[(b * d[1] + c) * d[2] + t]
    }

    /// Index into a rank-2 tensor.
    pub fn at2(&self, i: usize, j: usize) -> S {
        self.data[i * self.shape.d[1] + j]
    }

    pub fn item(&self) -> S {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise accumulate: `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<S>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    /// Change the shape without touching the data ordering.
    pub fn reshaped(mut self, shape: Shape) -> Self {
        assert_eq!(shape.numel(), self.data.len(), "reshape numel mismatch");
        self.shape = shape;
        self
    }

    pub fn map<F: Fn(S) -> S>(&self, f: F) -> Tensor<S> {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| v.to_f64x()).collect() }
    }

    pub fn to_f32(&self) -> Tensor<f32> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| v.to_f64x() as f32).collect() }
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} values]", self.data.len())
        }
    }
}

/// Deterministic lane-split sum; vectorizes without changing the result
/// between runs on the same build.
pub fn sum_lanes<S: Scalar>(xs: &[S]) -> S {
    let mut lanes = [S::zero(); 8];
    let chunks = xs.chunks_exact(8);
    let rem = chunks.remainder();
    for ch in chunks {
        for i in 0..8 {
            lanes[i] += ch[i];
        }
    }
    let mut acc = S::zero();
    for l in lanes {
        acc += l;
    }
    for &v in rem {
        acc += v;
    }
    acc
}

/// Deterministic dot product using the same lane scheme as [`sum_lanes`].
pub fn dot_lanes<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [S::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    let mut acc = S::zero();
    for l in lanes {
        acc += l;
    }
    for (x, y) in ra.iter().zip(rb) {
        acc += *x * *y;
    }
    acc
}
