//! Minimal dense N-dimensional array with reverse-mode automatic
//! differentiation.
//!
//! Values are 64-bit floats in row-major contiguous storage. The graph is a
//! dynamic tape: each op output optionally carries a backward closure over
//! its parents. `backward()` on a scalar walks the tape in reverse
//! topological order and accumulates `d loss / d leaf` into every tensor
//! that requires gradients. Repeated backward calls accumulate until
//! `zero_grad`.
//!
//! Shape misuse is a programming error and panics with a message naming the
//! offending op; data-dependent failures (file parsing, non-finite
//! activations) surface as [`crate::error::Error`] from the higher layers.

mod ops;
pub mod rng;
pub mod checkpoint;

pub use rng::Rng;

use std::cell::{Ref, RefCell};
use std::rc::Rc;

pub(crate) struct Node {
    pub(crate) parents: Vec<Tensor>,
    /// Receives the output gradient, accumulates into parents.
    pub(crate) backward: Box<dyn Fn(&[f64])>,
}

pub(crate) struct Inner {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Option<Node>,
}

/// Dense f64 tensor with optional gradient tracking.
///
/// Cloning is cheap (shared storage). Tensors are immutable after
/// construction except for gradient accumulation and explicit `set_data`
/// used by the optimizer on leaves between steps.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub(crate) fn make(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<Node>) -> Tensor {
        assert_eq!(
            numel(&shape),
            data.len(),
            "tensor construction: shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                node,
            }),
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::make(shape.to_vec(), data, false, None)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::make(vec![], vec![v], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::make(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        Tensor::make(shape.to_vec(), vec![v; numel(shape)], false, None)
    }

    pub fn randn(shape: &[usize], rng: &mut Rng) -> Tensor {
        Tensor::make(shape.to_vec(), rng.normal_vec(numel(shape)), false, None)
    }

    /// Leaf that participates in autodiff (a trainable parameter).
    pub fn param(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::make(shape.to_vec(), data, true, None)
    }

    pub fn param_randn(shape: &[usize], std: f64, rng: &mut Rng) -> Tensor {
        let data = rng.normal_vec(numel(shape)).into_iter().map(|v| v * std).collect();
        Tensor::param(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn len(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Scalar value; panics if the tensor is not single-element.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data.borrow()[0]
    }

    /// Replace leaf data in place (optimizer step). Graph nodes must not be
    /// rewritten mid-backward, so this is restricted to leaves.
    pub fn set_data(&self, new: &[f64]) {
        assert!(self.inner.node.is_none(), "set_data on non-leaf tensor");
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), new.len(), "set_data length mismatch");
        d.copy_from_slice(new);
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Cut the graph: same storage, no history, no gradient requirement.
    pub fn detach(&self) -> Tensor {
        Tensor::make(self.shape().to_vec(), self.to_vec(), false, None)
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.borrow().iter().all(|v| v.is_finite())
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        if !self.inner.requires_grad {
            return;
        }
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar loss. Panics if the tensor is not a
    /// single element (the contract error for non-scalar roots).
    pub fn backward(&self) {
        assert_eq!(
            self.len(),
            1,
            "backward() requires a scalar loss, got shape {:?}",
            self.shape()
        );
        if !self.inner.requires_grad {
            return;
        }
        // Post-order DFS for reverse-topological evaluation order.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: std::collections::HashSet<*const Inner> = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(Rc::as_ptr(&self.inner));
        while let Some((t, child_idx)) = stack.pop() {
            let n_parents = t.inner.node.as_ref().map_or(0, |n| n.parents.len());
            if child_idx < n_parents {
                let parent = t.inner.node.as_ref().unwrap().parents[child_idx].clone();
                stack.push((t, child_idx + 1));
                if parent.inner.requires_grad && visited.insert(Rc::as_ptr(&parent.inner)) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(t);
            }
        }
        // Interior gradients are scratch space for this sweep; only leaves
        // accumulate across repeated backward calls.
        for t in &order {
            if t.inner.node.is_some() {
                *t.inner.grad.borrow_mut() = None;
            }
        }
        self.accumulate_grad(&[1.0]);
        for t in order.iter().rev() {
            if let Some(node) = &t.inner.node {
                let g = t.inner.grad.borrow().clone();
                if let Some(g) = g {
                    (node.backward)(&g);
                }
            }
        }
    }
}

/// Row-major strides for a shape.
pub(crate) fn strides_for(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_of_sum_gives_ones() {
        let w = Tensor::param(&[3], vec![1.0, 2.0, 3.0]);
        let loss = w.sum_all();
        loss.backward();
        assert_eq!(w.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_elementwise_square() {
        let w = Tensor::param(&[3], vec![1.0, 2.0, 3.0]);
        let loss = w.mul(&w).sum_all();
        loss.backward();
        assert_eq!(w.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let w = Tensor::param(&[2], vec![1.0, 1.0]);
        let loss = w.sum_all();
        loss.backward();
        loss.backward();
        assert_eq!(w.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_rejects_non_scalar() {
        let w = Tensor::param(&[2], vec![1.0, 1.0]);
        w.add(&w).backward();
    }

    #[test]
    fn shared_subexpression_counted_once_per_use() {
        // loss = (w + w) . sum = 2*sum(w) => grad = 2
        let w = Tensor::param(&[2], vec![3.0, 4.0]);
        let y = w.add(&w);
        let loss = y.sum_all();
        loss.backward();
        assert_eq!(w.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn detach_blocks_gradients() {
        let w = Tensor::param(&[2], vec![1.0, 2.0]);
        let loss = w.detach().mul(&w).sum_all();
        loss.backward();
        // Only the non-detached path contributes.
        assert_eq!(w.grad().unwrap(), vec![1.0, 2.0]);
    }
}
