//! Central finite-difference checks of tape gradients.
//!
//! An element passes when `|analytic − numeric| / max(1, |numeric|)` is
//! below the tolerance.

use rand::seq::index::sample;
use rand::Rng;

use crate::autograd::{ops, Tape, Var};
use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::rng::{named_stream, Stream};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub step: Real,
    pub tolerance: f64,
    /// Elements probed per tensor; smaller tensors are checked exhaustively.
    pub per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck { step: 1e-5, tolerance: 1e-5, per_tensor: 8, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub max_error: f64,
    pub worst: Option<Mismatch>,
    pub failures: Vec<Mismatch>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }

    fn record(&mut self, m: Mismatch, tol: f64) {
        let err = (m.analytic - m.numeric).abs() / m.numeric.abs().max(1.0);
        self.checked += 1;
        if err > self.max_error || self.worst.is_none() {
            self.max_error = self.max_error.max(err);
            self.worst = Some(m.clone());
        }
        // Written negated so a NaN error counts as a failure.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(err < tol) {
            self.failures.push(m);
        }
    }

    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        if other.max_error >= self.max_error {
            self.max_error = other.max_error;
            self.worst = other.worst.or(self.worst.take());
        }
        self.failures.extend(other.failures);
    }
}

/// `Σ y ⊙ R` for a fixed pseudo-random `R`, turning any output into a
/// scalar whose gradient exercises every output element.
pub fn random_projection(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = named_stream(seed, Stream::Data, "gradcheck.projection");
    let r = Tensor::from_fn(tape.shape(y).to_vec(), |_| rng.random::<f64>() as Real * 2.0 - 1.0);
    let r = tape.leaf(r);
    let p = ops::mul(tape, y, r)?;
    Ok(ops::sum(tape, p))
}

fn probe_indices(numel: usize, per_tensor: usize, seed: u64, name: &str) -> Vec<usize> {
    if numel <= per_tensor {
        return (0..numel).collect();
    }
    let mut rng = named_stream(seed, Stream::Data, name);
    let mut idx = sample(&mut rng, numel, per_tensor).into_vec();
    idx.sort_unstable();
    idx
}

fn loss_value(tape: &Tape, loss: Var) -> Result<f64> {
    Ok(tape.value(loss).item()? as f64)
}

impl GradCheck {
    /// Checks gradients with respect to the leaf `inputs` of `f`.
    pub fn inputs(&self, inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> Result<GradReport> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let grads = tape.gradients(loss)?;
        let mut report = GradReport::default();
        for (k, t) in inputs.iter().enumerate() {
            let zero = Tensor::zeros(t.shape().to_vec());
            let g = grads.get(vars[k]).unwrap_or(&zero);
            let name = format!("input{k}");
            for i in probe_indices(t.numel(), self.per_tensor, self.seed, &name) {
                let eval = |delta: Real| -> Result<f64> {
                    let mut moved = inputs.to_vec();
                    moved[k].data_mut()[i] += delta;
                    let mut tape = Tape::new();
                    let vars: Vec<Var> = moved.into_iter().map(|t| tape.leaf(t)).collect();
                    let loss = f(&mut tape, &vars)?;
                    loss_value(&tape, loss)
                };
                let numeric = (eval(self.step)? - eval(-self.step)?) / (2.0 * self.step as f64);
                report.record(
                    Mismatch { tensor: name.clone(), index: i, analytic: g.data()[i] as f64, numeric },
                    self.tolerance,
                );
            }
        }
        Ok(report)
    }

    /// Checks gradients with respect to every parameter in `store`.
    pub fn params(&self, store: &ParamStore, f: impl Fn(&mut Tape, &ParamStore) -> Result<Var>) -> Result<GradReport> {
        let mut work = store.clone();
        work.zero_grads();
        let mut tape = Tape::new();
        let loss = f(&mut tape, &work)?;
        tape.backward(loss, &mut work)?;
        drop(tape);
        let analytic: Vec<Tensor> = work.iter().map(|p| p.grad.clone()).collect();
        let mut report = GradReport::default();
        for id in store.ids().collect::<Vec<_>>() {
            let name = store.get(id).name.clone();
            let original = store.value(id).clone();
            for i in probe_indices(original.numel(), self.per_tensor, self.seed, &name) {
                let mut eval = |delta: Real| -> Result<f64> {
                    let mut v = original.clone();
                    v.data_mut()[i] += delta;
                    work.set_value(id, v);
                    let mut tape = Tape::inference();
                    let loss = f(&mut tape, &work)?;
                    loss_value(&tape, loss)
                };
                let numeric = (eval(self.step)? - eval(-self.step)?) / (2.0 * self.step as f64);
                work.set_value(id, original.clone());
                report.record(
                    Mismatch {
                        tensor: name.clone(),
                        index: i,
                        analytic: analytic[id.index()].data()[i] as f64,
                        numeric,
                    },
                    self.tolerance,
                );
            }
        }
        if report.checked == 0 {
            return Err(Error::contract("gradcheck", "no parameters to check"));
        }
        Ok(report)
    }
}
