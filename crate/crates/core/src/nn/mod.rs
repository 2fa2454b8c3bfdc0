//! Network building blocks on top of the autodiff tape.
//!
//! Parameters live in a [`ParamStore`] as plain arrays between steps; a
//! forward pass binds them onto a tape (`ParamStore::bind`) and layers index
//! into that binding. Layer structs hold configuration and parameter ids
//! only, so they are cheap to clone and trivially serializable.

mod adam;
mod layers;

pub use adam::Adam;
pub use layers::{dropout, Conv2d, ConvTranspose2d, InstanceNorm2d, Linear};

use crate::autodiff::{Tape, Var};
use crate::scalar::Scalar;
use ndarray::ArrayD;
use rand::Rng;
use std::collections::BTreeMap;

/// Train/eval switch; controls dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Index of a parameter tensor within its store.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Named parameter tensors of one network.
#[derive(Clone)]
pub struct ParamStore<T: Scalar> {
    names: Vec<String>,
    values: Vec<ArrayD<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: ArrayD<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name.clone());
        self.values.push(value);
        let id = self.values.len() - 1;
        self.index.insert(name, id);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<T> {
        &self.values[id.0]
    }

    pub fn values(&self) -> &[ArrayD<T>] {
        &self.values
    }

    pub fn set_value(&mut self, id: ParamId, value: ArrayD<T>) {
        assert_eq!(self.values[id.0].shape(), value.shape());
        self.values[id.0] = value;
    }

    pub fn values_mut(&mut self) -> &mut [ArrayD<T>] {
        &mut self.values
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    /// Put every parameter on the tape as a grad-enabled leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Binding<'t, T> {
        Binding {
            vars: self.values.iter().map(|v| tape.param(v.clone())).collect(),
        }
    }

    /// Like `bind`, but gradients will not flow into the parameters.
    /// Used when a frozen network participates in another network's update.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape<T>) -> Binding<'t, T> {
        Binding {
            vars: self
                .values
                .iter()
                .map(|v| tape.constant(v.clone()))
                .collect(),
        }
    }
}

/// Tape-bound view of a `ParamStore` for one forward/backward pass.
pub struct Binding<'t, T: Scalar> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Scalar> Binding<'t, T> {
    /// Wrap already-bound vars (used when a caller owns the leaves, e.g. the
    /// gradient checks).
    pub fn from_vars(vars: &[Var<'t, T>]) -> Self {
        Binding {
            vars: vars.to_vec(),
        }
    }

    pub fn get(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'t, T>] {
        &self.vars
    }
}

/// Uniform Kaiming initialization with the gain convention of reference
/// conv implementations (a = sqrt(5)), plus matching bias bounds.
pub fn kaiming_uniform<T: Scalar>(shape: &[usize], rng: &mut impl Rng) -> ArrayD<T> {
    let (fan_in, _) = fan_in_out(shape);
    let gain = f64::sqrt(2.0 / (1.0 + 5.0));
    let bound = gain * f64::sqrt(3.0 / fan_in as f64);
    uniform(shape, -bound, bound, rng)
}

pub fn bias_uniform<T: Scalar>(len: usize, weight_shape: &[usize], rng: &mut impl Rng) -> ArrayD<T> {
    let (fan_in, _) = fan_in_out(weight_shape);
    let bound = 1.0 / (fan_in as f64).sqrt();
    uniform(&[len], -bound, bound, rng)
}

pub fn uniform<T: Scalar>(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> ArrayD<T> {
    ArrayD::from_shape_fn(ndarray::IxDyn(shape), |_| {
        T::from_f64(rng.random_range(lo..hi))
    })
}

fn fan_in_out(shape: &[usize]) -> (usize, usize) {
    assert!(shape.len() >= 2);
    let receptive: usize = shape[2..].iter().product();
    (shape[1] * receptive, shape[0] * receptive)
}

#[cfg(test)]
mod tests;
