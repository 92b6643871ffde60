//! Forward and backward passes for every layer kind in the architecture
//! family: valid-padding conv, 2x2 max-pool, dense, batch normalization,
//! inverted dropout, relu/tanh, reshape/flatten and softmax.
//!
//! Layout is NHWC. Each layer struct stores parameter ids and the dims it
//! was built with; tensors themselves live in [`ParamStore`].

use rand::Rng;

use super::init::seeded_rng;
use super::lstm::{Lstm, LstmCache};
use super::scalar::Scalar;
use super::store::{BufferId, BufferStore, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-layer state captured by the training forward pass for backward.
pub enum Aux<S> {
    None,
    Pool { argmax: Vec<u32> },
    BatchNorm { xhat: Tensor<S>, invstd: Vec<S> },
    Dropout { mask: Tensor<S> },
    Lstm(Box<LstmCache<S>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Tanh,
}

impl ActivationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    Activation(ActivationKind),
    MaxPool2d,
    ReshapeToSequence(ReshapeToSequence),
    Lstm(Lstm),
    Flatten,
    BatchNorm(BatchNorm),
    Dropout(Dropout),
    Dense(Dense),
    Softmax,
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Activation(_) => "activation",
            Layer::MaxPool2d => "maxpool",
            Layer::ReshapeToSequence(_) => "reshape_to_sequence",
            Layer::Lstm(_) => "lstm",
            Layer::Flatten => "flatten",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Dropout(_) => "dropout",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }

    pub fn forward_train<S: Scalar>(
        &self,
        x: &Tensor<S>,
        params: &ParamStore<S>,
        buffers: &mut BufferStore<S>,
        step_seed: u64,
        layer_idx: usize,
    ) -> Result<(Tensor<S>, Aux<S>)> {
        match self {
            Layer::Conv2d(l) => Ok((l.forward(x, params)?, Aux::None)),
            Layer::Activation(k) => Ok((activation_forward(*k, x), Aux::None)),
            Layer::MaxPool2d => {
                let (y, argmax) = maxpool_forward(x)?;
                Ok((y, Aux::Pool { argmax }))
            }
            Layer::ReshapeToSequence(l) => Ok((l.forward(x)?, Aux::None)),
            Layer::Lstm(l) => {
                let (y, cache) = l.forward(x, params, true)?;
                Ok((y, Aux::Lstm(Box::new(cache.expect("cache requested")))))
            }
            Layer::Flatten => Ok((flatten_forward(x)?, Aux::None)),
            Layer::BatchNorm(l) => l.forward_train(x, params, buffers),
            Layer::Dropout(l) => Ok(l.forward_train(x, step_seed, layer_idx)),
            Layer::Dense(l) => Ok((l.forward(x, params)?, Aux::None)),
            Layer::Softmax => Ok((softmax_forward(x)?, Aux::None)),
        }
    }

    pub fn forward_infer<S: Scalar>(
        &self,
        x: &Tensor<S>,
        params: &ParamStore<S>,
        buffers: &BufferStore<S>,
    ) -> Result<Tensor<S>> {
        match self {
            Layer::Conv2d(l) => l.forward(x, params),
            Layer::Activation(k) => Ok(activation_forward(*k, x)),
            Layer::MaxPool2d => Ok(maxpool_forward(x)?.0),
            Layer::ReshapeToSequence(l) => l.forward(x),
            Layer::Lstm(l) => Ok(l.forward(x, params, false)?.0),
            Layer::Flatten => flatten_forward(x),
            Layer::BatchNorm(l) => l.forward_infer(x, params, buffers),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Dense(l) => l.forward(x, params),
            Layer::Softmax => softmax_forward(x),
        }
    }

    /// `x` and `y` are this layer's forward input/output as recorded on the
    /// tape. Parameter gradients accumulate into `params`; returns `dx`.
    pub fn backward<S: Scalar>(
        &self,
        x: &Tensor<S>,
        y: &Tensor<S>,
        aux: &Aux<S>,
        dout: &Tensor<S>,
        params: &mut ParamStore<S>,
    ) -> Result<Tensor<S>> {
        match self {
            Layer::Conv2d(l) => l.backward(x, dout, params),
            Layer::Activation(k) => Ok(activation_backward(*k, y, dout)),
            Layer::MaxPool2d => match aux {
                Aux::Pool { argmax } => Ok(maxpool_backward(x, dout, argmax)),
                _ => Err(Error::state("maxpool backward without pooling cache")),
            },
            Layer::ReshapeToSequence(l) => l.backward(x, dout),
            Layer::Lstm(l) => match aux {
                Aux::Lstm(cache) => l.backward(x, cache, dout, params),
                _ => Err(Error::state("lstm backward without cache")),
            },
            Layer::Flatten => dout.clone().reshaped(x.shape()),
            Layer::BatchNorm(l) => match aux {
                Aux::BatchNorm { xhat, invstd } => l.backward(xhat, invstd, dout, params),
                _ => Err(Error::state("batchnorm backward without cache")),
            },
            Layer::Dropout(_) => match aux {
                Aux::Dropout { mask } => {
                    let mut dx = dout.clone();
                    for (d, &m) in dx.data_mut().iter_mut().zip(mask.data()) {
                        *d *= m;
                    }
                    Ok(dx)
                }
                _ => Err(Error::state("dropout backward without mask")),
            },
            Layer::Dense(l) => l.backward(x, dout, params),
            Layer::Softmax => Ok(softmax_backward(y, dout)),
        }
    }
}

// ---------------------------------------------------------------------------
// conv2d

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Conv2d {
    pub fn new<S: Scalar>(
        params: &mut ParamStore<S>,
        name: &str,
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        seed: u64,
        stream: u64,
    ) -> Self {
        let fan_in = kh * kw * cin;
        let fan_out = kh * kw * cout;
        let mut rng = seeded_rng(seed, stream);
        let kernel = params.add(
            format!("{name}.kernel"),
            super::init::glorot_uniform(&mut rng, &[kh, kw, cin, cout], fan_in, fan_out),
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Conv2d {
            kernel,
            bias,
            kh,
            kw,
            cin,
            cout,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [h, w, c] = dims3(input)?;
        if c != self.cin {
            return Err(Error::shape(format!(
                "conv2d expects input {:?} with {} channels, kernel is {:?}",
                input,
                self.cin,
                [self.kh, self.kw, self.cin, self.cout]
            )));
        }
        if h < self.kh || w < self.kw {
            return Err(Error::shape(format!(
                "conv2d kernel {}x{} does not fit input {h}x{w}",
                self.kh, self.kw
            )));
        }
        Ok(vec![h - self.kh + 1, w - self.kw + 1, self.cout])
    }

    fn im2col<S: Scalar>(&self, x: &[S], h: usize, w: usize, oh: usize, ow: usize, cols: &mut [S]) {
        let c = self.cin;
        let mut row = 0;
        for i in 0..oh {
            for j in 0..ow {
                let mut col = row * (self.kh * self.kw * c);
                for ki in 0..self.kh {
                    let base = ((i + ki) * w + j) * c;
                    let src = &x[base..base + self.kw * c];
                    cols[col..col + self.kw * c].copy_from_slice(src);
                    col += self.kw * c;
                }
                row += 1;
            }
        }
    }

    pub fn forward<S: Scalar>(&self, x: &Tensor<S>, params: &ParamStore<S>) -> Result<Tensor<S>> {
        let (b, h, w, _) = batch_dims4(x.shape())?;
        let out_dims = self.output_shape(&x.shape()[1..])?;
        let (oh, ow) = (out_dims[0], out_dims[1]);
        let ckk = self.kh * self.kw * self.cin;
        let kernel = params.value(self.kernel).data();
        let bias = params.value(self.bias).data();

        let mut y = Tensor::zeros(&[b, oh, ow, self.cout]);
        let mut cols = vec![S::ZERO; oh * ow * ckk];
        let in_stride = h * w * self.cin;
        let out_stride = oh * ow * self.cout;
        for s in 0..b {
            self.im2col(&x.data()[s * in_stride..(s + 1) * in_stride], h, w, oh, ow, &mut cols);
            let out = &mut y.data_mut()[s * out_stride..(s + 1) * out_stride];
            for (r, chunk) in out.chunks_exact_mut(self.cout).enumerate() {
                let _ = r;
                chunk.copy_from_slice(bias);
            }
            S::gemm(false, false, oh * ow, ckk, self.cout, S::ONE, &cols, kernel, S::ONE, out);
        }
        Ok(y)
    }

    pub fn backward<S: Scalar>(
        &self,
        x: &Tensor<S>,
        dout: &Tensor<S>,
        params: &mut ParamStore<S>,
    ) -> Result<Tensor<S>> {
        let (b, h, w, _) = batch_dims4(x.shape())?;
        let (_, oh, ow, _) = batch_dims4(dout.shape())?;
        let ckk = self.kh * self.kw * self.cin;
        let in_stride = h * w * self.cin;
        let out_stride = oh * ow * self.cout;

        // Bias gradient: sum over batch and spatial positions.
        {
            let dbias = params.grad_mut(self.bias);
            let db = dbias.data_mut();
            for chunk in dout.data().chunks_exact(self.cout) {
                for (acc, &d) in db.iter_mut().zip(chunk) {
                    *acc += d;
                }
            }
        }

        let kernel = params.value(self.kernel).data().to_vec();
        let mut dkernel_acc = vec![S::ZERO; ckk * self.cout];
        let mut dx = Tensor::zeros(x.shape());
        let mut cols = vec![S::ZERO; oh * ow * ckk];
        let mut dcols = vec![S::ZERO; oh * ow * ckk];

        for s in 0..b {
            let x_s = &x.data()[s * in_stride..(s + 1) * in_stride];
            let dout_s = &dout.data()[s * out_stride..(s + 1) * out_stride];
            self.im2col(x_s, h, w, oh, ow, &mut cols);
            // dK += cols^T @ dout_s
            S::gemm(true, false, ckk, oh * ow, self.cout, S::ONE, &cols, dout_s, S::ONE, &mut dkernel_acc);
            // dcols = dout_s @ K^T
            S::gemm(false, true, oh * ow, self.cout, ckk, S::ONE, dout_s, &kernel, S::ZERO, &mut dcols);
            // col2im scatter-add
            let dx_s = &mut dx.data_mut()[s * in_stride..(s + 1) * in_stride];
            let mut row = 0;
            for i in 0..oh {
                for j in 0..ow {
                    let mut col = row * ckk;
                    for ki in 0..self.kh {
                        let base = ((i + ki) * w + j) * self.cin;
                        for (slot, &d) in dx_s[base..base + self.kw * self.cin]
                            .iter_mut()
                            .zip(&dcols[col..col + self.kw * self.cin])
                        {
                            *slot += d;
                        }
                        col += self.kw * self.cin;
                    }
                    row += 1;
                }
            }
        }

        let dkernel = params.grad_mut(self.kernel);
        for (acc, d) in dkernel.data_mut().iter_mut().zip(dkernel_acc) {
            *acc += d;
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// maxpool 2x2

fn maxpool_forward<S: Scalar>(x: &Tensor<S>) -> Result<(Tensor<S>, Vec<u32>)> {
    let (b, h, w, c) = batch_dims4(x.shape())?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!(
            "maxpool2d needs both spatial dims >= 2, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[b, oh, ow, c]);
    let mut argmax = vec![0u32; b * oh * ow * c];
    let xd = x.data();
    let yd = y.data_mut();
    let mut out_idx = 0;
    for s in 0..b {
        for i in 0..oh {
            for j in 0..ow {
                for ch in 0..c {
                    let mut best_idx = ((s * h + 2 * i) * w + 2 * j) * c + ch;
                    let mut best = xd[best_idx];
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = ((s * h + 2 * i + di) * w + 2 * j + dj) * c + ch;
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                    yd[out_idx] = best;
                    argmax[out_idx] = best_idx as u32;
                    out_idx += 1;
                }
            }
        }
    }
    Ok((y, argmax))
}

fn maxpool_backward<S: Scalar>(x: &Tensor<S>, dout: &Tensor<S>, argmax: &[u32]) -> Tensor<S> {
    let mut dx = Tensor::zeros(x.shape());
    let dxd = dx.data_mut();
    for (&idx, &d) in argmax.iter().zip(dout.data()) {
        dxd[idx as usize] += d;
    }
    dx
}

// ---------------------------------------------------------------------------
// dense

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Dense {
    pub fn new<S: Scalar>(
        params: &mut ParamStore<S>,
        name: &str,
        in_features: usize,
        out_features: usize,
        seed: u64,
        stream: u64,
    ) -> Self {
        let mut rng = seeded_rng(seed, stream);
        let weight = params.add(
            format!("{name}.weight"),
            super::init::glorot_uniform(&mut rng, &[in_features, out_features], in_features, out_features),
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_features]));
        Dense {
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    pub fn forward<S: Scalar>(&self, x: &Tensor<S>, params: &ParamStore<S>) -> Result<Tensor<S>> {
        let (b, f) = dims2(x.shape())?;
        if f != self.in_features {
            return Err(Error::shape(format!(
                "dense expects input [batch, {}], got {:?} against weight {:?}",
                self.in_features,
                x.shape(),
                [self.in_features, self.out_features]
            )));
        }
        let mut y = Tensor::zeros(&[b, self.out_features]);
        let bias = params.value(self.bias).data();
        for row in y.data_mut().chunks_exact_mut(self.out_features) {
            row.copy_from_slice(bias);
        }
        S::gemm(
            false,
            false,
            b,
            f,
            self.out_features,
            S::ONE,
            x.data(),
            params.value(self.weight).data(),
            S::ONE,
            y.data_mut(),
        );
        Ok(y)
    }

    pub fn backward<S: Scalar>(
        &self,
        x: &Tensor<S>,
        dout: &Tensor<S>,
        params: &mut ParamStore<S>,
    ) -> Result<Tensor<S>> {
        let (b, f) = dims2(x.shape())?;
        let o = self.out_features;
        // dW += x^T @ dout
        {
            let mut dw = std::mem::replace(params.grad_mut(self.weight), Tensor::zeros(&[0]));
            S::gemm(true, false, f, b, o, S::ONE, x.data(), dout.data(), S::ONE, dw.data_mut());
            *params.grad_mut(self.weight) = dw;
        }
        // db += column sums of dout
        {
            let db = params.grad_mut(self.bias).data_mut();
            for row in dout.data().chunks_exact(o) {
                for (acc, &d) in db.iter_mut().zip(row) {
                    *acc += d;
                }
            }
        }
        // dx = dout @ W^T
        let mut dx = Tensor::zeros(&[b, f]);
        S::gemm(
            false,
            true,
            b,
            o,
            f,
            S::ONE,
            dout.data(),
            params.value(self.weight).data(),
            S::ZERO,
            dx.data_mut(),
        );
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// activations

fn activation_forward<S: Scalar>(kind: ActivationKind, x: &Tensor<S>) -> Tensor<S> {
    let mut y = x.clone();
    match kind {
        ActivationKind::Relu => {
            for v in y.data_mut() {
                if *v < S::ZERO {
                    *v = S::ZERO;
                }
            }
        }
        ActivationKind::Tanh => {
            for v in y.data_mut() {
                *v = v.tanh();
            }
        }
    }
    y
}

fn activation_backward<S: Scalar>(kind: ActivationKind, y: &Tensor<S>, dout: &Tensor<S>) -> Tensor<S> {
    let mut dx = dout.clone();
    match kind {
        ActivationKind::Relu => {
            for (d, &o) in dx.data_mut().iter_mut().zip(y.data()) {
                if o <= S::ZERO {
                    *d = S::ZERO;
                }
            }
        }
        ActivationKind::Tanh => {
            for (d, &o) in dx.data_mut().iter_mut().zip(y.data()) {
                *d *= S::ONE - o * o;
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// reshape / flatten

/// Maps `[batch, H, W, C]` to `[batch, W, H*C]`: the time-frame axis becomes
/// the sequence axis, band and channel interleave as `h * C + c`.
#[derive(Debug, Clone)]
pub struct ReshapeToSequence;

impl ReshapeToSequence {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [h, w, c] = dims3(input)?;
        Ok(vec![w, h * c])
    }

    pub fn forward<S: Scalar>(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (b, h, w, c) = batch_dims4(x.shape())?;
        let mut y = Tensor::zeros(&[b, w, h * c]);
        let xd = x.data();
        let yd = y.data_mut();
        for s in 0..b {
            for i in 0..h {
                for j in 0..w {
                    let src = ((s * h + i) * w + j) * c;
                    let dst = (s * w + j) * (h * c) + i * c;
                    yd[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                }
            }
        }
        Ok(y)
    }

    pub fn backward<S: Scalar>(&self, x: &Tensor<S>, dout: &Tensor<S>) -> Result<Tensor<S>> {
        let (b, h, w, c) = batch_dims4(x.shape())?;
        let mut dx = Tensor::zeros(x.shape());
        let dd = dout.data();
        let dxd = dx.data_mut();
        for s in 0..b {
            for i in 0..h {
                for j in 0..w {
                    let dst = ((s * h + i) * w + j) * c;
                    let src = (s * w + j) * (h * c) + i * c;
                    dxd[dst..dst + c].copy_from_slice(&dd[src..src + c]);
                }
            }
        }
        Ok(dx)
    }
}

fn flatten_forward<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let b = *x
        .shape()
        .first()
        .ok_or_else(|| Error::shape("flatten on rank-0 tensor"))?;
    let rest: usize = x.shape()[1..].iter().product();
    x.clone().reshaped(&[b, rest])
}

// ---------------------------------------------------------------------------
// batch normalization

/// Normalizes over all axes except the last (channels/features).
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub features: usize,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn new<S: Scalar>(
        params: &mut ParamStore<S>,
        buffers: &mut BufferStore<S>,
        name: &str,
        features: usize,
    ) -> Self {
        let gamma = params.add(format!("{name}.gamma"), Tensor::filled(&[features], S::ONE));
        let beta = params.add(format!("{name}.beta"), Tensor::zeros(&[features]));
        let running_mean = buffers.add(format!("{name}.running_mean"), Tensor::zeros(&[features]));
        let running_var = buffers.add(
            format!("{name}.running_var"),
            Tensor::filled(&[features], S::ONE),
        );
        BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
            features,
            momentum: 0.9,
            epsilon: 1e-5,
        }
    }

    fn check_features(&self, shape: &[usize]) -> Result<usize> {
        let c = *shape.last().ok_or_else(|| Error::shape("batchnorm on rank-0 tensor"))?;
        if c != self.features {
            return Err(Error::shape(format!(
                "batchnorm built for {} features, input shape {shape:?}",
                self.features
            )));
        }
        Ok(c)
    }

    pub fn forward_train<S: Scalar>(
        &self,
        x: &Tensor<S>,
        params: &ParamStore<S>,
        buffers: &mut BufferStore<S>,
    ) -> Result<(Tensor<S>, Aux<S>)> {
        let c = self.check_features(x.shape())?;
        let rows = x.numel() / c;
        if rows < 2 {
            return Err(Error::config(
                "batchnorm in train mode needs at least 2 rows per feature \
                 (batch of 1: variance undefined)",
            ));
        }
        // Batch moments, accumulated in f64.
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for row in x.data().chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v.to_f64();
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        for row in x.data().chunks_exact(c) {
            for (j, &v) in row.iter().enumerate() {
                let d = v.to_f64() - mean[j];
                var[j] += d * d;
            }
        }
        for v in &mut var {
            *v /= rows as f64;
        }

        let invstd: Vec<S> = var
            .iter()
            .map(|&v| S::from_f64(1.0 / (v + self.epsilon).sqrt()))
            .collect();
        let mean_s: Vec<S> = mean.iter().map(|&m| S::from_f64(m)).collect();

        let gamma = params.value(self.gamma).data();
        let beta = params.value(self.beta).data();
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        {
            let xh = xhat.data_mut();
            let yd = y.data_mut();
            for (i, &v) in x.data().iter().enumerate() {
                let j = i % c;
                let h = (v - mean_s[j]) * invstd[j];
                xh[i] = h;
                yd[i] = gamma[j] * h + beta[j];
            }
        }

        // Update running stats with momentum.
        {
            let rm = buffers.value_mut(self.running_mean).data_mut();
            for (r, &m) in rm.iter_mut().zip(&mean) {
                *r = S::from_f64(self.momentum * r.to_f64() + (1.0 - self.momentum) * m);
            }
            let rv = buffers.value_mut(self.running_var).data_mut();
            for (r, &v) in rv.iter_mut().zip(&var) {
                *r = S::from_f64(self.momentum * r.to_f64() + (1.0 - self.momentum) * v);
            }
        }

        Ok((y, Aux::BatchNorm { xhat, invstd }))
    }

    pub fn forward_infer<S: Scalar>(
        &self,
        x: &Tensor<S>,
        params: &ParamStore<S>,
        buffers: &BufferStore<S>,
    ) -> Result<Tensor<S>> {
        let c = self.check_features(x.shape())?;
        let gamma = params.value(self.gamma).data();
        let beta = params.value(self.beta).data();
        let rm = buffers.value(self.running_mean).data();
        let rv = buffers.value(self.running_var).data();
        let scale: Vec<S> = (0..c)
            .map(|j| gamma[j] * S::from_f64(1.0 / (rv[j].to_f64() + self.epsilon).sqrt()))
            .collect();
        let mut y = Tensor::zeros(x.shape());
        let yd = y.data_mut();
        for (i, &v) in x.data().iter().enumerate() {
            let j = i % c;
            yd[i] = scale[j] * (v - rm[j]) + beta[j];
        }
        Ok(y)
    }

    pub fn backward<S: Scalar>(
        &self,
        xhat: &Tensor<S>,
        invstd: &[S],
        dout: &Tensor<S>,
        params: &mut ParamStore<S>,
    ) -> Result<Tensor<S>> {
        let c = self.features;
        let rows = dout.numel() / c;
        let mut sum_dy = vec![S::ZERO; c];
        let mut sum_dy_xhat = vec![S::ZERO; c];
        for (row_d, row_h) in dout.data().chunks_exact(c).zip(xhat.data().chunks_exact(c)) {
            for j in 0..c {
                sum_dy[j] += row_d[j];
                sum_dy_xhat[j] += row_d[j] * row_h[j];
            }
        }
        {
            let dgamma = params.grad_mut(self.gamma).data_mut();
            for (g, &s) in dgamma.iter_mut().zip(&sum_dy_xhat) {
                *g += s;
            }
        }
        {
            let dbeta = params.grad_mut(self.beta).data_mut();
            for (b, &s) in dbeta.iter_mut().zip(&sum_dy) {
                *b += s;
            }
        }
        let gamma = params.value(self.gamma).data();
        let n = S::from_f64(rows as f64);
        let mut dx = Tensor::zeros(dout.shape());
        let dxd = dx.data_mut();
        for (i, (&dy, &h)) in dout.data().iter().zip(xhat.data()).enumerate() {
            let j = i % c;
            let term = n * dy - sum_dy[j] - h * sum_dy_xhat[j];
            dxd[i] = gamma[j] * invstd[j] * term / n;
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// dropout

#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        Dropout { rate }
    }

    pub fn forward_train<S: Scalar>(
        &self,
        x: &Tensor<S>,
        step_seed: u64,
        layer_idx: usize,
    ) -> (Tensor<S>, Aux<S>) {
        if self.rate == 0.0 {
            return (
                x.clone(),
                Aux::Dropout {
                    mask: Tensor::filled(x.shape(), S::ONE),
                },
            );
        }
        let mut rng = seeded_rng(step_seed, 0xD0_u64 + layer_idx as u64);
        let scale = S::from_f64(1.0 / (1.0 - self.rate));
        let mut mask = Tensor::zeros(x.shape());
        let mut y = x.clone();
        {
            let md = mask.data_mut();
            let yd = y.data_mut();
            for i in 0..md.len() {
                if rng.gen::<f64>() < self.rate {
                    yd[i] = S::ZERO;
                } else {
                    md[i] = scale;
                    yd[i] *= scale;
                }
            }
        }
        (y, Aux::Dropout { mask })
    }
}

// ---------------------------------------------------------------------------
// softmax

/// Numerically stable row softmax over `[batch, K]`.
pub fn softmax_forward<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let (_, k) = dims2(x.shape())?;
    let mut y = x.clone();
    for row in y.data_mut().chunks_exact_mut(k) {
        let mut max = row[0];
        for &v in row.iter() {
            max = max.max(v);
        }
        let mut sum = S::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(y)
}

/// Jacobian-vector product through softmax: `dx = p * (dout - sum(dout * p))`.
fn softmax_backward<S: Scalar>(p: &Tensor<S>, dout: &Tensor<S>) -> Tensor<S> {
    let k = *p.shape().last().unwrap();
    let mut dx = dout.clone();
    for (drow, prow) in dx.data_mut().chunks_exact_mut(k).zip(p.data().chunks_exact(k)) {
        let mut dot = S::ZERO;
        for (d, &pv) in drow.iter().zip(prow) {
            dot += *d * pv;
        }
        for (d, &pv) in drow.iter_mut().zip(prow) {
            *d = pv * (*d - dot);
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// shape helpers

fn dims2(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [a, b] => Ok((*a, *b)),
        other => Err(Error::shape(format!("expected rank-2 tensor, got {other:?}"))),
    }
}

fn dims3(shape: &[usize]) -> Result<[usize; 3]> {
    match shape {
        [a, b, c] => Ok([*a, *b, *c]),
        other => Err(Error::shape(format!(
            "expected [H, W, C] shape, got {other:?}"
        ))),
    }
}

fn batch_dims4(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match shape {
        [b, h, w, c] => Ok((*b, *h, *w, *c)),
        other => Err(Error::shape(format!(
            "expected [batch, H, W, C] tensor, got {other:?}"
        ))),
    }
}
