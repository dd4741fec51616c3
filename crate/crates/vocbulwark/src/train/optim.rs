//! Decoupled-weight-decay adaptive-moment optimizer, gradient clipping, and
//! the cosine learning-rate schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{ParamSet, Shape, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators keyed by (prefixed) parameter name.
#[derive(Clone, Default)]
pub struct OptimizerState {
    pub m: BTreeMap<String, Tensor<f32>>,
    pub v: BTreeMap<String, Tensor<f32>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Scale all gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut BTreeMap<String, Tensor<f32>>, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for g in grads.values() {
        for &v in g.data() {
            sq += (v as f64) * (v as f64);
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = (max_norm / norm) as f32;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// One bias-corrected adaptive-moment update plus separate multiplicative
/// weight decay `lr * wd * param`, applied to every trainable parameter that
/// has a gradient entry. Non-finite gradients abort the step.
pub fn optimizer_step(
    groups: &mut [(&str, &mut ParamSet)],
    grads: &BTreeMap<String, Tensor<f32>>,
    st: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(Error::Diverged(format!("non-finite gradient for {name}")));
        }
    }
    st.step += 1;
    let t = st.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (prefix, set) in groups.iter_mut() {
        for p in set.iter_mut() {
            if !p.trainable {
                continue;
            }
            let key = format!("{prefix}/{}", p.name);
            let Some(g) = grads.get(&key) else { continue };
            let shape = p.value.shape();
            let m = st.m.entry(key.clone()).or_insert_with(|| Tensor::zeros(shape));
            let v = st.v.entry(key).or_insert_with(|| Tensor::zeros(shape));
            let (b1, b2) = (BETA1 as f32, BETA2 as f32);
            for i in 0..shape.numel() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + (1.0 - b1) * gi;
                let vi = b2 * v.data()[i] + (1.0 - b2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi as f64 / bc1;
                let v_hat = vi as f64 / bc2;
                let p_old = p.value.data()[i] as f64;
                let update = lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + weight_decay * p_old);
                p.value.data_mut()[i] = (p_old - update) as f32;
            }
        }
    }
    Ok(())
}

/// Cosine annealing from `lr0` down to `lr_min` over `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64, lr_min: f64) -> f64 {
    let ratio = (step as f64 / total_steps.max(1) as f64).clamp(0.0, 1.0);
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * ratio).cos())
}

/// Convenience for single-set optimization (pretraining).
pub fn optimizer_step_single(
    set: &mut ParamSet,
    prefix: &str,
    grads: &BTreeMap<String, Tensor<f32>>,
    st: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    let mut groups = [(prefix, set)];
    optimizer_step(&mut groups, grads, st, lr, weight_decay)
}
