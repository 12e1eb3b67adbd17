//! Dense tensors with reverse-mode differentiation.
//!
//! A [`Tensor`] is a reference-counted node in a dynamic graph. Every op
//! records its parents and a backward closure; [`Tensor::backward`] walks the
//! reachable graph in reverse creation order and accumulates gradients into
//! leaves that require them. The graph is rebuilt on every forward pass.
//!
//! Broadcasting is limited to leading-batch expansion: the right operand of a
//! binary op may have a shape equal to a suffix of the left operand's shape.

mod adam;
pub mod gradcheck;
mod ops;
mod params;

use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

pub use adam::{AdamConfig, AdamState};
pub use params::{ModelParams, ParamsError};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Argument { op: &'static str, msg: String },
}

pub(crate) fn shape_err<T>(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<T, TensorError> {
    Err(TensorError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}

pub(crate) fn arg_err<T>(op: &'static str, msg: impl Into<String>) -> Result<T, TensorError> {
    Err(TensorError::Argument { op, msg: msg.into() })
}

type Grads<T> = Vec<Option<Vec<T>>>;
type BackwardFn<T> = Box<dyn Fn(&[T]) -> Grads<T>>;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

struct Node<T: Real> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
    op: &'static str,
}

/// Reference-counted tensor handle. Cloning is cheap and shares the node.
pub struct Tensor<T: Real>(Rc<Node<T>>);

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("op", &self.0.op)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tensor<T> {
    fn leaf(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, op: &'static str) -> Self {
        assert_eq!(numel(&shape), data.len(), "data length does not match shape {shape:?}");
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents: Vec::new(),
            backward: None,
            op,
        }))
    }

    /// A tensor that never receives gradients.
    pub fn constant(shape: &[usize], data: Vec<T>) -> Self {
        Self::leaf(shape.to_vec(), data, false, "constant")
    }

    /// A trainable leaf.
    pub fn param(shape: &[usize], data: Vec<T>) -> Self {
        Self::leaf(shape.to_vec(), data, true, "param")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::constant(shape, vec![T::zero(); numel(shape)])
    }

    pub fn scalar(x: T) -> Self {
        Self::constant(&[], vec![x])
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Self {
        Self::constant(shape, data.iter().map(|&x| T::lit(x)).collect())
    }

    /// Builds an op node. Gradient tracking is enabled iff any parent tracks.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T]) -> Grads<T> + 'static,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        let (parents, backward): (Vec<Tensor<T>>, Option<BackwardFn<T>>) = if requires_grad {
            (parents, Some(Box::new(backward)))
        } else {
            (Vec::new(), None)
        };
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents,
            backward,
            op,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn op_name(&self) -> &'static str {
        self.0.op
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.borrow().iter().map(|x| x.as_f64()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        let d = self.0.data.borrow();
        assert_eq!(d.len(), 1, "item() on tensor of shape {:?}", self.0.shape);
        d[0]
    }

    /// Overwrites leaf values in place (optimizer updates, checkpoint loads).
    pub fn set_data(&self, data: Vec<T>) {
        assert_eq!(data.len(), self.numel());
        *self.0.data.borrow_mut() = data;
    }

    pub(crate) fn update_data(&self, f: impl FnOnce(&mut [T])) {
        f(&mut self.0.data.borrow_mut());
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = Some(vec![T::zero(); self.numel()]);
    }

    pub fn clear_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Detached copy: same values, no graph, no gradient tracking.
    pub fn detach(&self) -> Self {
        Self::constant(self.shape(), self.to_vec())
    }

    pub fn ptr_eq(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Reverse-mode pass from a scalar loss. Gradients are accumulated into the
    /// `grad` buffer of every reachable leaf that requires them.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return arg_err("backward", format!("loss must be scalar, got shape {:?}", self.shape()));
        }
        if !self.0.requires_grad {
            return Ok(());
        }
        // Node ids increase with creation, so descending id is a reverse topological order.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.0.id) {
                continue;
            }
            for p in &t.0.parents {
                if p.0.requires_grad && !seen.contains(&p.0.id) {
                    stack.push(p.clone());
                }
            }
            order.push(t);
        }
        order.sort_by(|a, b| b.0.id.cmp(&a.0.id));

        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.0.id, vec![T::one()]);
        for node in &order {
            let Some(g) = pending.remove(&node.0.id) else { continue };
            match &node.0.backward {
                Some(bw) => {
                    let grads = bw(&g);
                    debug_assert_eq!(grads.len(), node.0.parents.len());
                    for (parent, pg) in node.0.parents.iter().zip(grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.0.requires_grad {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), parent.numel(), "grad size from {}", node.0.op);
                        match pending.get_mut(&parent.0.id) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += *b),
                            None => {
                                pending.insert(parent.0.id, pg);
                            }
                        }
                    }
                }
                None => {
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }
}
