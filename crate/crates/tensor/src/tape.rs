//! Reverse-mode differentiation.
//!
//! Every differentiable op executed on a [`Var`] whose inputs carry a node id
//! appends a node to the owning [`Tape`]. Node ids are assigned in execution
//! order, which is a valid topological order, so [`Tape::backward`] simply
//! walks the record from the loss down to id 0.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Computes input gradients from the output gradient. The mask says which
/// inputs are tracked; untracked slots may be returned as `None`.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
}

/// Ordered op record for one forward pass. Confined to a single thread.
pub struct Tape<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input whose gradient is reported by [`Tape::backward`].
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { inputs: Vec::new(), backward: None });
        Var { tape: self, node: Some(nodes.len() - 1), value }
    }

    /// An input that is never differentiated.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        Var { tape: self, node: None, value }
    }

    pub(crate) fn record<'t>(
        &'t self,
        value: Tensor<T>,
        inputs: &[&Var<'t, T>],
        backward: BackwardFn<T>,
    ) -> Var<'t, T> {
        let ids: Vec<Option<usize>> = inputs.iter().map(|v| v.node).collect();
        if ids.iter().all(Option::is_none) {
            return self.constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { inputs: ids, backward: Some(backward) });
        Var { tape: self, node: Some(nodes.len() - 1), value }
    }

    /// Propagates d(loss)/d(node) from a scalar loss back to every leaf.
    pub fn backward(&self, loss: &Var<'_, T>) -> Result<Gradients<T>> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::ForeignVar);
        }
        if loss.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss.value.shape().to_vec()));
        }
        let mut leaves = HashMap::new();
        let Some(root) = loss.node else {
            return Ok(Gradients { grads: leaves });
        };

        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; root + 1];
        grads[root] = Some(Tensor::ones(loss.value.shape().to_vec()));

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let Some(backward) = &node.backward else {
                leaves.insert(id, g);
                continue;
            };
            let mask: Vec<bool> = node.inputs.iter().map(Option::is_some).collect();
            let input_grads = backward(&g, &mask);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (slot, ig) in node.inputs.iter().zip(input_grads) {
                let (Some(parent), Some(ig)) = (slot, ig) else { continue };
                match &mut grads[*parent] {
                    Some(acc) => acc.add_assign(&ig)?,
                    empty => *empty = Some(ig),
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }
}

/// Leaf gradients produced by one backward pass.
pub struct Gradients<T> {
    grads: HashMap<usize, Tensor<T>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient for `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: &Var<'_, T>) -> Option<&Tensor<T>> {
        var.node.and_then(|id| self.grads.get(&id))
    }

    /// Gradient for `var`, zeros when the loss does not depend on it.
    pub fn get_or_zeros(&self, var: &Var<'_, T>) -> Tensor<T> {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(var.shape().to_vec()))
    }
}

/// A tensor value bound to a tape.
#[derive(Clone)]
pub struct Var<'t, T: Element> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) node: Option<usize>,
    pub(crate) value: Tensor<T>,
}

impl<'t, T: Element> Var<'t, T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn into_value(self) -> Tensor<T> {
        self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Self {
        self.tape.constant(self.value.clone())
    }

    /// Wrap another tensor as a constant on the same tape.
    pub fn constant_like(&self, value: Tensor<T>) -> Self {
        self.tape.constant(value)
    }
}

impl<T: Element> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("node", &self.node).field("value", &self.value).finish()
    }
}
