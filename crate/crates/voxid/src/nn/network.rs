//! A linear stack of layers with a recorded forward tape and reverse-mode
//! backward pass.

use super::layers::{Aux, Layer, Mode};
use super::scalar::Scalar;
use super::store::{BufferStore, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Activations and per-layer caches recorded by one training forward pass.
struct Tape<S> {
    /// `activations[i]` is the input to layer `i`; the last entry is the
    /// network output.
    activations: Vec<Tensor<S>>,
    auxes: Vec<Aux<S>>,
}

pub struct Network<S: Scalar> {
    pub(crate) layers: Vec<Layer>,
    pub params: ParamStore<S>,
    pub buffers: BufferStore<S>,
    /// Per-sample output shape of every layer, input first.
    pub shape_trace: Vec<Vec<usize>>,
    /// Per-sample input shape `[bands, frames, channels]`.
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    tape: Option<Tape<S>>,
}

impl<S: Scalar> Network<S> {
    pub(crate) fn from_parts(
        layers: Vec<Layer>,
        params: ParamStore<S>,
        buffers: BufferStore<S>,
        shape_trace: Vec<Vec<usize>>,
        input_shape: Vec<usize>,
        num_classes: usize,
    ) -> Self {
        Network {
            layers,
            params,
            buffers,
            shape_trace,
            input_shape,
            num_classes,
            tape: None,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        let got = &x.shape()[1..];
        if x.shape().len() != self.input_shape.len() + 1 || got != self.input_shape.as_slice() {
            return Err(Error::shape(format!(
                "network expects input [batch, {:?}], got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training-mode forward pass. Records the tape for a later
    /// [`Network::backward`] call and returns the logits (the softmax layer
    /// is deferred to the fused loss).
    pub fn forward_train(&mut self, x: &Tensor<S>, step_seed: u64) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut auxes = Vec::with_capacity(self.layers.len());
        activations.push(x.clone());
        let mut current = x.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            if matches!(layer, Layer::Softmax) {
                // Softmax pairs with the cross-entropy loss during training.
                auxes.push(Aux::None);
                activations.push(current.clone());
                continue;
            }
            let (out, aux) =
                layer.forward_train(&current, &self.params, &mut self.buffers, step_seed, idx)?;
            auxes.push(aux);
            activations.push(out.clone());
            current = out;
        }
        self.tape = Some(Tape { activations, auxes });
        Ok(current)
    }

    /// Inference-mode forward returning logits: dropout is identity,
    /// batchnorm uses running statistics, softmax is skipped.
    pub fn predict_logits(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut current = x.clone();
        for layer in &self.layers {
            if matches!(layer, Layer::Softmax) {
                continue;
            }
            current = layer.forward_infer(&current, &self.params, &self.buffers)?;
        }
        Ok(current)
    }

    /// Inference-mode class probabilities (softmax applied).
    pub fn predict_proba(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        super::layers::softmax_forward(&self.predict_logits(x)?)
    }

    /// Propagates `d loss / d logits` back through the recorded tape,
    /// accumulating parameter gradients. Consumes the tape: calling this
    /// without a fresh forward pass is a state error.
    pub fn backward(&mut self, dlogits: &Tensor<S>) -> Result<()> {
        let tape = self.tape.take().ok_or_else(|| {
            Error::state("backward called before a training forward pass recorded a tape")
        })?;
        let mut grad = dlogits.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            if matches!(layer, Layer::Softmax) {
                continue;
            }
            let x = &tape.activations[idx];
            let y = &tape.activations[idx + 1];
            grad = layer.backward(x, y, &tape.auxes[idx], &grad, &mut self.params)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.params.zero_grads();
    }

    /// Deterministic snapshot of all weights and buffers.
    pub fn snapshot(&self) -> NetworkSnapshot<S> {
        NetworkSnapshot {
            params: self.params.snapshot(),
            buffers: self.buffers.snapshot(),
        }
    }

    pub fn restore(&mut self, snap: &NetworkSnapshot<S>) {
        self.params.restore(&snap.params);
        self.buffers.restore(&snap.buffers);
    }

    pub fn mode_name(mode: Mode) -> &'static str {
        match mode {
            Mode::Train => "train",
            Mode::Infer => "infer",
        }
    }
}

#[derive(Clone)]
pub struct NetworkSnapshot<S> {
    pub params: Vec<Tensor<S>>,
    pub buffers: Vec<Tensor<S>>,
}
