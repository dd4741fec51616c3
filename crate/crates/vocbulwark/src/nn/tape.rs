//! Minimal reverse-mode differentiation over the operator set the networks
//! need. A [`Tape`] records forward values in topological order; [`backward`]
//! walks the record once, accumulating gradients into a [`GradStore`].
//!
//! Nodes whose ancestors contain no trainable leaf carry no backward closure,
//! so frozen subgraphs (the vocoder backbone during watermark training) cost
//! nothing in the backward pass.

use super::tensor::{Scalar, Shape, Tensor};

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) type BackFn<S> = Box<dyn Fn(&[Tensor<S>], &Tensor<S>, &mut GradStore<S>)>;

struct Node<S: Scalar> {
    back: Option<BackFn<S>>,
    requires_grad: bool,
}

/// Forward record plus backward plumbing.
pub struct Tape<S: Scalar> {
    vals: Vec<Tensor<S>>,
    nodes: Vec<Node<S>>,
}

/// Gradient accumulator produced by [`Tape::backward`].
pub struct GradStore<S: Scalar> {
    grads: Vec<Option<Tensor<S>>>,
    wants: Vec<bool>,
}

impl<S: Scalar> GradStore<S> {
    /// Whether gradient flow into `v` is needed at all.
    pub fn wants(&self, v: Var) -> bool {
        self.wants.get(v.0).copied().unwrap_or(false)
    }

    /// Zero-initialized gradient buffer for `v`, or `None` when `v` needs no
    /// gradient. Backward closures accumulate into the returned slice.
    pub fn buf(&mut self, v: Var, shape: Shape) -> Option<&mut [S]> {
        if !self.wants(v) {
            return None;
        }
        let slot = &mut self.grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(shape));
        }
        Some(slot.as_mut().unwrap().data_mut())
    }

    /// Accumulate a full-tensor contribution.
    pub fn add(&mut self, v: Var, t: &Tensor<S>) {
        if let Some(buf) = self.buf(v, t.shape()) {
            for (a, b) in buf.iter_mut().zip(t.data()) {
                *a += *b;
            }
        }
    }

    /// Remove and return the accumulated gradient of `v`.
    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { vals: Vec::new(), nodes: Vec::new() }
    }

    /// Value of a recorded variable.
    pub fn val(&self, v: Var) -> &Tensor<S> {
        &self.vals[v.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a non-trainable value.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(t, false, None)
    }

    /// Insert a trainable leaf; its gradient survives [`Tape::backward`].
    pub fn leaf(&mut self, t: Tensor<S>) -> Var {
        self.push(t, true, None)
    }

    /// Index the next pushed node will get; lets backward closures read their
    /// own output value out of `vals`.
    pub(crate) fn next_idx(&self) -> usize {
        self.nodes.len()
    }

    pub(crate) fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn any_requires_grad(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.requires_grad(*v))
    }

    pub(crate) fn push(&mut self, val: Tensor<S>, requires_grad: bool, back: Option<BackFn<S>>) -> Var {
        debug_assert!(back.is_none() || requires_grad);
        let idx = self.nodes.len();
        self.vals.push(val);
        self.nodes.push(Node { back, requires_grad });
        Var(idx)
    }

    /// Reverse pass from a scalar `root`. Gradients of leaves (and of any
    /// variable nothing propagated through) remain in the returned store.
    pub fn backward(&self, root: Var) -> GradStore<S> {
        let n = root.0 + 1;
        let mut gs = GradStore {
            grads: (0..n).map(|_| None).collect(),
            wants: self.nodes[..n].iter().map(|nd| nd.requires_grad).collect(),
        };
        assert_eq!(self.vals[root.0].shape().numel(), 1, "backward root must be scalar");
        if !self.nodes[root.0].requires_grad {
            return gs;
        }
        gs.grads[root.0] = Some(Tensor::full(self.vals[root.0].shape(), S::one()));
        for i in (0..n).rev() {
            if self.nodes[i].back.is_none() {
                continue; // leaf or constant: keep any accumulated gradient
            }
            let Some(g) = gs.grads[i].take() else { continue };
            if let Some(back) = &self.nodes[i].back {
                back(&self.vals, &g, &mut gs);
            }
        }
        gs
    }
}
