//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and a closure
//! mapping the output gradient to one gradient per input. Node ids grow
//! monotonically, so the tape is already in topological order and the
//! backward sweep is a single reverse scan.
//!
//! Complex intermediates are real tensors whose trailing axis holds
//! `(re, im)`; their gradients follow the same layout.

pub mod conv;
pub mod fourier;
pub mod ops;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

type BackwardFn = Box<dyn Fn(&Tensor) -> Result<Vec<Tensor>> + Send + Sync>;

enum Rule {
    Leaf,
    Backward(BackwardFn),
    /// Forward-only operation; gradients may not flow through it.
    Opaque,
}

struct Node {
    op: &'static str,
    inputs: Vec<usize>,
    value: Tensor,
    param: Option<ParamId>,
    rule: Rule,
}

pub struct Tape {
    nodes: Vec<Node>,
    record: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), record: true }
    }

    /// A tape that keeps values but no backward rules.
    pub fn inference() -> Self {
        Tape { nodes: Vec::new(), record: false }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes held by node values; the activation-memory estimate.
    pub fn value_bytes(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.param.is_none())
            .map(|n| n.value.numel() * std::mem::size_of::<crate::tensor::Real>())
            .sum()
    }

    /// Input or constant; its gradient can be read back from [`Gradients`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_node("leaf", Vec::new(), value, None, Rule::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        self.push_node("param", Vec::new(), value, Some(id), Rule::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op
    }

    pub(crate) fn push(
        &mut self,
        op: &'static str,
        inputs: &[Var],
        value: Tensor,
        backward: impl Fn(&Tensor) -> Result<Vec<Tensor>> + Send + Sync + 'static,
    ) -> Var {
        let rule = if self.record { Rule::Backward(Box::new(backward)) } else { Rule::Opaque };
        let inputs = inputs.iter().map(|v| v.0).collect();
        self.push_node(op, inputs, value, None, rule)
    }

    pub(crate) fn push_opaque(&mut self, op: &'static str, inputs: &[Var], value: Tensor) -> Var {
        let inputs = inputs.iter().map(|v| v.0).collect();
        self.push_node(op, inputs, value, None, Rule::Opaque)
    }

    fn push_node(
        &mut self,
        op: &'static str,
        inputs: Vec<usize>,
        value: Tensor,
        param: Option<ParamId>,
        rule: Rule,
    ) -> Var {
        self.nodes.push(Node { op, inputs, value, param, rule });
        Var(self.nodes.len() - 1)
    }

    /// Gradients of a scalar `loss` with respect to every node it depends on.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be a scalar, got shape {:?}", root.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(root.value.shape().to_vec()));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.rule {
                Rule::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Rule::Opaque => {
                    return Err(Error::contract(
                        "backward",
                        format!("operation `{}` was recorded without a backward rule", node.op),
                    ));
                }
                Rule::Backward(f) => {
                    let input_grads = f(&g)?;
                    debug_assert_eq!(input_grads.len(), node.inputs.len(), "op {}", node.op);
                    for (&inp, ig) in node.inputs.iter().zip(input_grads) {
                        debug_assert_eq!(
                            ig.shape(),
                            self.nodes[inp].value.shape(),
                            "gradient shape from op {}",
                            node.op
                        );
                        match &mut grads[inp] {
                            Some(acc) => acc.add_assign(&ig)?,
                            slot => *slot = Some(ig),
                        }
                    }
                    // Interior gradients are not kept.
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Runs the backward sweep from `loss` and adds each reachable
    /// parameter's gradient into `store`. Unreachable parameters are left
    /// untouched.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        grads.accumulate_into(self, store)?;
        Ok(grads)
    }
}

/// Leaf gradients produced by [`Tape::gradients`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf or parameter node, if the loss depends on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn accumulate_into(&self, tape: &Tape, store: &mut ParamStore) -> Result<()> {
        for (id, g) in self.grads.iter().enumerate() {
            let (Some(g), Some(pid)) = (g, tape.nodes[id].param) else {
                continue;
            };
            store.get_mut(pid).grad.add_assign(g)?;
        }
        Ok(())
    }
}
