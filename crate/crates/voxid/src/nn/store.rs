//! Central storage for trainable parameters and non-trainable buffers.

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferId(pub(crate) usize);

/// Named parameters with gradients of identical shape. Gradients are zeroed
/// between optimizer steps.
#[derive(Debug, Clone)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<Tensor<S>>,
    grads: Vec<Tensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name.into());
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<S> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<S> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.grads[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(S::ZERO);
        }
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(|t| t.numel()).sum()
    }

    pub fn check_grads_finite(&self) -> Result<()> {
        for (g, name) in self.grads.iter().zip(&self.names) {
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { name: name.clone() });
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<Tensor<S>> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: &[Tensor<S>]) {
        assert_eq!(snapshot.len(), self.values.len());
        self.values.clone_from_slice(snapshot);
    }
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Named non-trainable state (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct BufferStore<S> {
    names: Vec<String>,
    values: Vec<Tensor<S>>,
}

impl<S: Scalar> BufferStore<S> {
    pub fn new() -> Self {
        BufferStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> BufferId {
        let id = BufferId(self.values.len());
        self.values.push(value);
        self.names.push(name.into());
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: BufferId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: BufferId) -> &Tensor<S> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: BufferId) -> &mut Tensor<S> {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = BufferId> {
        (0..self.values.len()).map(BufferId)
    }

    pub fn snapshot(&self) -> Vec<Tensor<S>> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: &[Tensor<S>]) {
        assert_eq!(snapshot.len(), self.values.len());
        self.values.clone_from_slice(snapshot);
    }
}

impl<S: Scalar> Default for BufferStore<S> {
    fn default() -> Self {
        Self::new()
    }
}
