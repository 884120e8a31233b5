//! Dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Tensors are immutable once created; only gradient buffers mutate. Each
//! op records a backward closure that scatters upstream gradients into its
//! parents, and [`DiffTensor::backward`] replays those closures in reverse
//! topological order from a scalar loss. Graph construction and the
//! backward pass are single-threaded by design.

mod adam;
mod conv;
mod ops;

pub use adam::{adam_step, AdamState};
pub use conv::{conv2d, conv2d_transpose, ConvSpec, Padding};
pub use ops::{concat_last_axis, multi_head_attention, AttentionParams, AttentionSpec};

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Autodiff-tracked N-dimensional array of 64-bit floats.
#[derive(Clone)]
pub struct DiffTensor {
    inner: Rc<TensorInner>,
}

struct TensorInner {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: RefCell<Option<Vec<f64>>>,
    node: Option<Node>,
    requires_grad: bool,
    backward_done: Cell<bool>,
}

struct Node {
    parents: Vec<DiffTensor>,
    /// Receives this tensor's gradient buffer and accumulates into parents.
    backward: Box<dyn Fn(&[f64])>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl DiffTensor {
    fn leaf(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension("zero-sized dimension".into()));
        }
        if values.len() != numel(&shape) {
            return Err(Error::Dimension(format!(
                "buffer holds {} values but shape {:?} needs {}",
                values.len(),
                shape,
                numel(&shape)
            )));
        }
        Ok(Self {
            inner: Rc::new(TensorInner {
                shape,
                values,
                grad: RefCell::new(None),
                node: None,
                requires_grad,
                backward_done: Cell::new(false),
            }),
        })
    }

    /// Trainable leaf: participates in gradient accumulation.
    pub fn parameter(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::leaf(shape, values, true)
    }

    /// Non-trainable leaf (inputs, targets, fixed weights).
    pub fn constant(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::leaf(shape, values, false)
    }

    pub fn scalar(value: f64) -> Self {
        Self::leaf(vec![1], vec![value], false).expect("scalar shape")
    }

    /// Internal op-output constructor. The node is only retained when some
    /// parent is tracked, so constant subgraphs stay graph-free.
    pub(crate) fn from_op<F>(
        shape: Vec<usize>,
        values: Vec<f64>,
        parents: Vec<DiffTensor>,
        backward: F,
    ) -> Self
    where
        F: Fn(&[f64]) + 'static,
    {
        debug_assert_eq!(values.len(), numel(&shape));
        let requires_grad = parents.iter().any(|p| p.inner.requires_grad);
        let node = requires_grad.then(|| Node {
            parents,
            backward: Box::new(backward),
        });
        Self {
            inner: Rc::new(TensorInner {
                shape,
                values,
                grad: RefCell::new(None),
                node,
                requires_grad,
                backward_done: Cell::new(false),
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.inner.values
    }

    pub fn numel(&self) -> usize {
        self.inner.values.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::Autodiff(format!(
                "item() needs a scalar, shape is {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.values[0])
    }

    /// Copy of the gradient buffer, if one has been accumulated.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    /// Accumulate a contribution into this tensor's gradient buffer,
    /// allocating zeros on first touch.
    pub(crate) fn accumulate_grad<F>(&self, write: F)
    where
        F: FnOnce(&mut [f64]),
    {
        let mut slot = self.inner.grad.borrow_mut();
        let buf = slot.get_or_insert_with(|| vec![0.0; self.inner.values.len()]);
        write(buf);
    }

    fn ptr_id(&self) -> usize {
        Rc::as_ptr(&self.inner) as usize
    }

    /// Reverse-mode sweep from a scalar loss. Every tracked tensor that the
    /// loss depends on receives `dLoss/dTensor` in its grad buffer. A second
    /// call on the same loss without [`DiffTensor::reset_graph_grads`] is an
    /// error because gradients would double-accumulate.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Autodiff(format!(
                "backward requires a scalar loss, shape is {:?}",
                self.shape()
            )));
        }
        if !self.inner.requires_grad {
            return Err(Error::Autodiff(
                "loss does not depend on any tracked tensor".into(),
            ));
        }
        if self.inner.backward_done.replace(true) {
            return Err(Error::Autodiff(
                "backward already ran on this loss; reset gradients first".into(),
            ));
        }
        let order = topo_order(self);
        self.accumulate_grad(|g| g[0] += 1.0);
        for t in order.iter().rev() {
            if let Some(node) = &t.inner.node {
                let grad = t.inner.grad.borrow();
                if let Some(g) = grad.as_ref() {
                    (node.backward)(g);
                }
            }
        }
        Ok(())
    }

    /// Clear every gradient buffer reachable from this tensor and re-arm
    /// backward.
    pub fn reset_graph_grads(&self) {
        for t in topo_order(self) {
            *t.inner.grad.borrow_mut() = None;
            t.inner.backward_done.set(false);
        }
    }

    /// Drop this tensor's own gradient buffer (used between optimizer steps).
    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }
}

impl std::fmt::Debug for DiffTensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffTensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

/// Iterative post-order DFS over tracked ancestors; parents appear before
/// children, so reversing yields a valid backward order.
fn topo_order(root: &DiffTensor) -> Vec<DiffTensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    visited.insert(root.ptr_id());
    let mut stack: Vec<(DiffTensor, usize)> = vec![(root.clone(), 0)];
    while let Some((t, next_parent)) = stack.pop() {
        let parent = t
            .inner
            .node
            .as_ref()
            .and_then(|n| n.parents.get(next_parent))
            .cloned();
        match parent {
            Some(p) => {
                stack.push((t, next_parent + 1));
                if p.inner.requires_grad && visited.insert(p.ptr_id()) {
                    stack.push((p, 0));
                }
            }
            None => order.push(t),
        }
    }
    order
}

pub(crate) fn check_same_shape(op: &str, a: &DiffTensor, b: &DiffTensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_all_ones() {
        let x = DiffTensor::parameter(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap();
        let loss = x.sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn square_sum_gradient_matches_hand_derivation() {
        // loss = sum(x ⊙ x), x = [1,2,3] → grad = [2,4,6]
        let x = DiffTensor::parameter(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let x = DiffTensor::parameter(vec![2], vec![1.0, 2.0]).unwrap();
        let y = x.relu();
        assert!(matches!(y.backward(), Err(Error::Autodiff(_))));
    }

    #[test]
    fn second_backward_without_reset_is_rejected() {
        let x = DiffTensor::parameter(vec![2], vec![1.0, 2.0]).unwrap();
        let loss = x.sum();
        loss.backward().unwrap();
        assert!(matches!(loss.backward(), Err(Error::Autodiff(_))));
        loss.reset_graph_grads();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn shared_subexpression_accumulates_both_paths() {
        // loss = sum(x + x) → grad = 2 per element
        let x = DiffTensor::parameter(vec![2], vec![3.0, 4.0]).unwrap();
        let loss = x.add(&x).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn constant_subgraphs_are_untracked() {
        let a = DiffTensor::constant(vec![2], vec![1.0, 2.0]).unwrap();
        let b = DiffTensor::constant(vec![2], vec![3.0, 4.0]).unwrap();
        let c = a.add(&b).unwrap();
        assert!(!c.requires_grad());
        assert!(c.inner.node.is_none());
    }

    #[test]
    fn forward_and_backward_are_deterministic() {
        let run = || {
            let x = DiffTensor::parameter(vec![4], vec![0.3, -0.7, 1.9, 0.01]).unwrap();
            let y = x.sigmoid().mul(&x.relu()).unwrap().sum();
            y.backward().unwrap();
            (y.item().unwrap().to_bits(), x.grad().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        };
        assert_eq!(run(), run());
    }
}
