use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::error::{shape_err, Result, TensorError};
use crate::scalar::Scalar;

/// Operator tag recorded on every graph node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Conv2d,
    MaxPool2x2,
    BatchNorm,
    Relu,
    ConcatChannels,
    Crop,
    GlobalAvgPool,
    Linear,
    SoftmaxCrossEntropy,
    Add,
    Mul,
    Scale,
    Sum,
}

pub(crate) struct BackwardArgs<'a, T: Scalar> {
    pub grad: &'a [T],
    pub inputs: &'a [Tensor<T>],
    pub output: &'a [T],
}

/// Computes one gradient buffer per input (`None` where the input does not
/// track gradients).
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&BackwardArgs<'_, T>) -> Vec<Option<Vec<T>>> + Send + Sync>;

pub struct OpNode<T: Scalar> {
    kind: OpKind,
    inputs: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

impl<T: Scalar> OpNode<T> {
    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn inputs(&self) -> &[Tensor<T>] {
        &self.inputs
    }
}

struct Inner<T: Scalar> {
    shape: Vec<usize>,
    data: RwLock<Vec<T>>,
    grad: Mutex<Option<Vec<T>>>,
    requires_grad: bool,
    node: Option<OpNode<T>>,
}

/// Dense row-major tensor, batch x height x width x channels for images.
///
/// Cloning is cheap and shares storage. A tensor produced by an operator on
/// gradient-tracking inputs keeps its inputs alive until it is dropped.
pub struct Tensor<T: Scalar = f32> {
    inner: Arc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.inner.shape)
            .field("dtype", &T::NAME)
            .field("requires_grad", &self.inner.requires_grad);
        if let Some(node) = &self.inner.node {
            s.field("op", &node.kind);
        }
        s.finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    fn leaf(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Arc::new(Inner {
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad,
                node: None,
            }),
        }
    }

    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return shape_err(
                "from_vec",
                format!("shape {:?} needs {} values, got {}", shape, numel(&shape), data.len()),
            );
        }
        Ok(Self::leaf(shape, data, false))
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Self::leaf(shape, vec![value; n], false)
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(Vec::new(), vec![value], false)
    }

    /// Leaf tensor that accumulates gradients.
    pub fn parameter(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        Ok(Self::from_vec(shape, data)?.requires_grad(true))
    }

    /// Returns a new leaf with the same values and the given tracking flag.
    pub fn requires_grad(self, on: bool) -> Self {
        if self.inner.node.is_none() && self.inner.requires_grad == on {
            return self;
        }
        Self::leaf(self.inner.shape.clone(), self.to_vec(), on)
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        kind: OpKind,
        inputs: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let tracked = inputs.iter().any(|t| t.inner.requires_grad);
        let node = tracked.then(|| OpNode {
            kind,
            inputs,
            backward,
        });
        Tensor {
            inner: Arc::new(Inner {
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad: tracked,
                node,
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<T>> {
        self.inner.data.read()
    }

    /// Mutable access to the values, used by optimizers and finite differences.
    pub fn data_mut(&self) -> RwLockWriteGuard<'_, Vec<T>> {
        self.inner.data.write()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().clone()
    }

    pub fn item(&self) -> T {
        let d = self.data();
        assert_eq!(d.len(), 1, "item() on a tensor with {} elements", d.len());
        d[0]
    }

    pub fn tracks_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    pub fn op(&self) -> Option<&OpNode<T>> {
        self.inner.node.as_ref()
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().clone()
    }

    pub fn set_grad(&self, grad: Option<Vec<T>>) {
        if let Some(g) = &grad {
            assert_eq!(g.len(), self.len(), "gradient length must match data");
        }
        *self.inner.grad.lock() = grad;
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock() = None;
    }

    /// Copy of the values without graph history.
    pub fn detach(&self) -> Self {
        Self::leaf(self.inner.shape.clone(), self.to_vec(), false)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        let data = self.data().iter().map(|v| U::of(v.as_f64())).collect();
        Tensor::leaf(self.inner.shape.clone(), data, self.inner.requires_grad && self.is_leaf())
    }

    /// Reshape a copy of the values; the result is a fresh leaf.
    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::from_vec(shape, self.to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }

    /// Identity of the underlying storage.
    pub fn id(&self) -> usize {
        Arc::as_ptr(&self.inner) as *const u8 as usize
    }

    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.shape().len() != rank {
            return shape_err(op, format!("expected rank {rank}, got shape {:?}", self.shape()));
        }
        Ok(())
    }

    /// Reverse-mode differentiation from a scalar.
    ///
    /// Leaves that track gradients receive `d self / d leaf`, added to any
    /// gradient already stored on them.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(TensorError::NonScalar(self.shape().to_vec()));
        }
        if !self.item().is_finite() {
            return Err(TensorError::NonFinite("backward seed"));
        }
        if !self.tracks_grad() {
            return Ok(());
        }

        let order = self.topological_order();
        let mut pending: HashMap<usize, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);

        for tensor in order.iter().rev() {
            let Some(grad) = pending.remove(&tensor.id()) else {
                continue;
            };
            match &tensor.inner.node {
                None => {
                    let mut slot = tensor.inner.grad.lock();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, g)| *a = *a + *g),
                        None => *slot = Some(grad),
                    }
                }
                Some(node) => {
                    let output = tensor.data();
                    let input_grads = (node.backward)(&BackwardArgs {
                        grad: &grad,
                        inputs: &node.inputs,
                        output: &output,
                    });
                    debug_assert_eq!(input_grads.len(), node.inputs.len());
                    for (input, g) in node.inputs.iter().zip(input_grads) {
                        let Some(g) = g else { continue };
                        if !input.tracks_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.len(), input.len(), "{:?} grad size", node.kind);
                        match pending.get_mut(&input.id()) {
                            Some(acc) => {
                                acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b)
                            }
                            None => {
                                pending.insert(input.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the gradient-tracking subgraph: inputs precede consumers.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(node) = &t.inner.node {
                for input in node.inputs.iter().rev() {
                    if input.tracks_grad() && !visited.contains(&input.id()) {
                        stack.push((input.clone(), false));
                    }
                }
            }
        }
        order
    }
}
