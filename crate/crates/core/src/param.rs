//! Named trainable parameters and their initializers.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{named_stream, Stream};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether a parameter tensor holds real numbers or `(re, im)` pairs in its
/// trailing axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Real,
    Complex,
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub kind: ParamKind,
    /// Receives decoupled weight decay during optimization.
    pub decay: bool,
}

impl Parameter {
    pub fn numel(&self) -> usize {
        self.value.numel()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, kind: ParamKind, decay: bool) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Build(format!("duplicate parameter name {name:?}")));
        }
        if kind == ParamKind::Complex && value.last_dim() != 2 {
            return Err(Error::contract(
                "complex parameter",
                format!("{name}: trailing axis must hold (re, im), got {:?}", value.shape()),
            ));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Parameter { name: name.clone(), value, grad, kind, decay });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Tensor::zeros(p.value.shape().to_vec());
        }
    }

    /// Total element count; complex parameters count two per entry.
    pub fn count(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    /// Replaces a value, keeping the gradient shape in step with it.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) {
        let p = &mut self.params[id.0];
        if p.grad.shape() != value.shape() {
            p.grad = Tensor::zeros(value.shape().to_vec());
        }
        p.value = value;
    }
}

/// Draws initial values for a parameter from a name-keyed stream.
pub struct Initializer {
    seed: u64,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer { seed }
    }

    /// Normal(0, std²) truncated to ±2 standard deviations.
    pub fn trunc_normal(&self, name: &str, shape: &[usize], std: Real) -> Tensor {
        let mut rng = named_stream(self.seed, Stream::Init, name);
        Tensor::from_fn(shape.to_vec(), |_| loop {
            let z: f64 = StandardNormal.sample(&mut rng);
            if z.abs() <= 2.0 {
                break (z * std as f64) as Real;
            }
        })
    }

    /// Plain Normal(0, std²).
    pub fn normal(&self, name: &str, shape: &[usize], std: Real) -> Tensor {
        let mut rng = named_stream(self.seed, Stream::Init, name);
        Tensor::from_fn(shape.to_vec(), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z * std as f64) as Real
        })
    }

    pub fn uniform(&self, name: &str, shape: &[usize], lo: Real, hi: Real) -> Tensor {
        let mut rng = named_stream(self.seed, Stream::Init, name);
        Tensor::from_fn(shape.to_vec(), |_| lo + (hi - lo) * rng.random::<f64>() as Real)
    }
}

/// How a parameter starts out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    TruncNormal(Real),
    Normal(Real),
    Const(Real),
}

/// Declares parameters while a network is assembled.
///
/// A counting builder records names and shapes without allocating, which is
/// how the large configurations are sized.
pub struct Builder {
    store: ParamStore,
    init: Initializer,
    materialize: bool,
    shapes: Vec<(String, Vec<usize>)>,
}

impl Builder {
    pub fn new(seed: u64) -> Self {
        Builder { store: ParamStore::new(), init: Initializer::new(seed), materialize: true, shapes: Vec::new() }
    }

    pub fn counting() -> Self {
        Builder { materialize: false, ..Builder::new(0) }
    }

    pub fn param(&mut self, name: &str, shape: &[usize], kind: ParamKind, decay: bool, init: Init) -> Result<ParamId> {
        if self.shapes.iter().any(|(n, _)| n == name) {
            return Err(Error::Build(format!("duplicate parameter name {name:?}")));
        }
        self.shapes.push((name.to_string(), shape.to_vec()));
        if !self.materialize {
            return Ok(ParamId(self.shapes.len() - 1));
        }
        let value = match init {
            Init::TruncNormal(std) => self.init.trunc_normal(name, shape, std),
            Init::Normal(std) => self.init.normal(name, shape, std),
            Init::Const(v) => Tensor::full(shape.to_vec(), v),
        };
        self.store.add(name, value, kind, decay)
    }

    /// Names and shapes in declaration order.
    pub fn shapes(&self) -> &[(String, Vec<usize>)] {
        &self.shapes
    }

    pub fn element_count(&self) -> usize {
        self.shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    pub fn finish(self) -> ParamStore {
        self.store
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grads_track_value_shapes() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::ones([2, 3]), ParamKind::Real, true).unwrap();
        assert_eq!(store.get(id).grad.shape(), &[2, 3]);
        store.set_value(id, Tensor::ones([4]));
        assert_eq!(store.get(id).grad.shape(), &[4]);
        assert!(store.add("w", Tensor::ones([1]), ParamKind::Real, false).is_err());
    }

    #[test]
    fn complex_parameters_need_pair_axis() {
        let mut store = ParamStore::new();
        assert!(store.add("k", Tensor::ones([3, 3]), ParamKind::Complex, true).is_err());
        store.add("k", Tensor::ones([3, 2]), ParamKind::Complex, true).unwrap();
        assert_eq!(store.count(), 6);
    }

    #[test]
    fn truncation_bounds_hold() {
        let init = Initializer::new(3);
        let t = init.trunc_normal("x", &[4096], 0.02);
        assert!(t.data().iter().all(|v| v.abs() <= 0.04));
        let again = init.trunc_normal("x", &[4096], 0.02);
        assert_eq!(t, again);
    }
}
