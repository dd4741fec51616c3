//! Named parameter sets and their binding onto a tape.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::{Scalar, Shape, Tensor};

/// A named trainable (or frozen) tensor.
#[derive(Clone, Debug)]
pub struct Param<S: Scalar = f32> {
    pub name: String,
    pub value: Tensor<S>,
    pub trainable: bool,
}

/// Ordered collection of parameters; iteration order is the sorted name order
/// so everything built on top (optimizer, checkpoints) is deterministic.
#[derive(Clone, Default)]
pub struct ParamSet<S: Scalar = f32> {
    params: BTreeMap<String, Param<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet { params: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<S>, trainable: bool) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Invalid(format!("param {name}: non-finite values")));
        }
        if self
            .params
            .insert(name.to_string(), Param { name: name.to_string(), value, trainable })
            .is_some()
        {
            return Err(Error::Invalid(format!("param {name}: duplicate name")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param<S>> {
        self.params.get(name)
    }

    pub fn tensor(&self, name: &str) -> &Tensor<S> {
        &self.params.get(name).unwrap_or_else(|| panic!("missing param {name}")).value
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<S>) {
        let p = self.params.get_mut(name).unwrap_or_else(|| panic!("missing param {name}"));
        assert_eq!(p.value.shape(), value.shape(), "param {name}: shape change");
        p.value = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.params.values_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.iter().map(|p| p.value.shape().numel()).sum()
    }

    /// Mark every parameter non-trainable.
    pub fn freeze(&mut self) {
        for p in self.params.values_mut() {
            p.trainable = false;
        }
    }

    pub fn all_frozen(&self) -> bool {
        self.iter().all(|p| !p.trainable)
    }

    pub fn to_f64(&self) -> ParamSet<f64> {
        let mut out = ParamSet::new();
        for p in self.iter() {
            out.insert(&p.name, p.value.to_f64(), p.trainable).unwrap();
        }
        out
    }

    /// Bind every parameter onto `tape`. With `trainable` set, parameters
    /// flagged trainable become gradient-carrying leaves; otherwise everything
    /// enters as a constant (frozen subgraph).
    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> Bound {
        let mut map = BTreeMap::new();
        for p in self.iter() {
            let var = if trainable && p.trainable {
                tape.leaf(p.value.clone())
            } else {
                tape.constant(p.value.clone())
            };
            map.insert(p.name.clone(), var);
        }
        Bound { map }
    }
}

/// Parameter names resolved to tape variables.
pub struct Bound {
    map: BTreeMap<String, Var>,
}

impl Bound {
    pub fn v(&self, name: &str) -> Var {
        *self.map.get(name).unwrap_or_else(|| panic!("unbound param {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.map.iter()
    }
}

/// Uniform init over  ±1/sqrt(fan_in).
pub fn init_uniform<S: Scalar, R: Rng>(shape: Shape, fan_in: usize, rng: &mut R) -> Tensor<S> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..shape.numel())
        .map(|_| S::from_f(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut ps = ParamSet::<f32>::new();
        ps.insert("w", Tensor::from_vec(vec![1.0]), true).unwrap();
        assert!(ps.insert("w", Tensor::from_vec(vec![2.0]), true).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut ps = ParamSet::<f32>::new();
        assert!(ps.insert("w", Tensor::from_vec(vec![f32::NAN]), true).is_err());
    }

    #[test]
    fn scalar_count_sums_shapes() {
        let mut ps = ParamSet::<f32>::new();
        ps.insert("a", Tensor::zeros(Shape::d2(3, 4)), true).unwrap();
        ps.insert("b", Tensor::zeros(Shape::d1(5)), false).unwrap();
        assert_eq!(ps.scalar_count(), 17);
    }
}
