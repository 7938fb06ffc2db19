//! Dense f64 tensors with reverse-mode differentiation.
//!
//! A [`Tensor`] is a shared handle to an n-dimensional row-major array.
//! Operations live on a [`Tape`]; running an op through a tape records the
//! primitive so that [`Tape::backward`] can later push adjoints back to every
//! `requires_grad` leaf. Tensors not touched by any tape are plain buffers.

mod optim;
mod tape;

pub use optim::{Optimizer, OptimizerKind};
pub use tape::{Tape, BCE_EPS};

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::rc::Rc;

use crate::error::{Error, Result};

struct TensorInner {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    requires_grad: Cell<bool>,
    grad: RefCell<Option<Vec<f64>>>,
    /// (tape id, node index) of the most recent tape this tensor appeared on.
    node: Cell<Option<(u64, usize)>>,
}

/// Shared handle to a dense array. Cloning is shallow.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<TensorInner>,
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data.
    ///
    /// Fails if the element count does not match the shape product or if any
    /// entry is non-finite.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!("empty tensor shape {shape:?}")));
        }
        if numel != data.len() {
            return Err(Error::contract(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "tensor::new" });
        }
        Ok(Tensor {
            inner: Rc::new(TensorInner {
                shape: shape.to_vec(),
                data: RefCell::new(data),
                requires_grad: Cell::new(false),
                grad: RefCell::new(None),
                node: Cell::new(None),
            }),
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel]).expect("zeros is always valid")
    }

    pub fn scalar(v: f64) -> Result<Tensor> {
        Tensor::new(&[1], vec![v])
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(&[rows, cols], data)
    }

    /// Marks this tensor as a differentiable leaf and returns it.
    pub fn with_grad(self) -> Tensor {
        self.inner.requires_grad.set(true);
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    /// Number of rows / columns for rank-2 tensors; rank-1 is treated as a
    /// single row.
    pub fn rows(&self) -> usize {
        if self.inner.shape.len() >= 2 {
            self.inner.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        match self.inner.shape.len() {
            0 => 1,
            1 => self.inner.shape[0],
            _ => self.inner.shape[1..].iter().product(),
        }
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    /// Mutable access to the raw buffer. Mutating a tensor that already
    /// appears on a live tape invalidates that tape's saved values; callers
    /// only do this between tape lifetimes (optimizer steps, projections).
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.inner.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.inner.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn has_grad(&self) -> bool {
        self.inner.grad.borrow().is_some()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Accumulates `delta` into the stored gradient, allocating zeros first
    /// if no gradient is present.
    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// A copy of the values with no gradient requirement and no tape history.
    pub fn detach(&self) -> Tensor {
        Tensor {
            inner: Rc::new(TensorInner {
                shape: self.inner.shape.clone(),
                data: RefCell::new(self.inner.data.borrow().clone()),
                requires_grad: Cell::new(false),
                grad: RefCell::new(None),
                node: Cell::new(None),
            }),
        }
    }

    /// Deep copy preserving `requires_grad` (used for checkpoint snapshots).
    pub fn deep_clone(&self) -> Tensor {
        let t = self.detach();
        t.inner.requires_grad.set(self.requires_grad());
        t
    }

    /// Bitwise equality of the value buffers.
    pub fn bits_eq(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
            && self
                .data()
                .iter()
                .zip(other.data().iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn node_get(&self) -> Option<(u64, usize)> {
        self.inner.node.get()
    }

    pub(crate) fn node_set(&self, tape_id: u64, idx: usize) {
        self.inner.node.set(Some((tape_id, idx)));
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let data = self.data();
        let preview: Vec<f64> = data.iter().take(8).copied().collect();
        write!(
            f,
            "Tensor{:?}{}{:?}",
            self.shape(),
            if self.requires_grad() { "*" } else { "" },
            preview
        )
    }
}
