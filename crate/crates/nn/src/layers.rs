//! Parameter storage and the layer set used by the GAN models.

use rand::Rng;

use crate::error::{NnError, Result};
use crate::tape::{Gradients, ParamKey, Tape, Var};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// How a forward pass treats parameters and batch-norm statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Gradients recorded; batch norm uses and tracks batch statistics.
    Train,
    /// Parameters held constant; batch norm still uses batch statistics.
    /// For backpropagating through a model without updating it.
    Frozen,
    /// Parameters held constant; batch norm uses running statistics.
    Eval,
}

impl Mode {
    pub fn records_grad(self) -> bool {
        self == Mode::Train
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Owns the parameters and non-trainable buffers of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    id: u32,
    params: Vec<Parameter>,
    buffers: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new(id: u32) -> Self {
        Self {
            id,
            params: Vec::new(),
            buffers: Vec::new(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.params.push(Parameter::new(name, value));
        self.params.len() - 1
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.buffers.push((name.into(), value));
        self.buffers.len() - 1
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn buffer(&self, index: usize) -> &Tensor {
        &self.buffers[index].1
    }

    pub fn buffer_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.buffers[index].1
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records parameter `index` as a tape leaf.
    pub fn bind(&self, tape: &mut Tape, index: usize, requires_grad: bool) -> Var {
        let key = ParamKey { store: self.id, index };
        tape.parameter(self.params[index].value.clone(), key, requires_grad)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Adds the gradients of this store's leaves on `tape` into `grad`.
    pub fn accumulate(&mut self, tape: &Tape, grads: &Gradients) {
        for (var, key) in tape.parameters() {
            if key.store != self.id {
                continue;
            }
            if let Some(g) = grads.get(var) {
                self.params[key.index].grad.add_assign(g);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Every parameter and buffer, in insertion order, for checkpointing.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .chain(self.buffers.iter().cloned())
            .collect()
    }

    /// Overwrites values from a checkpoint, matching by name and shape.
    pub fn load_named(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        let lookup = |name: &str, shape: &[usize]| -> Result<Tensor> {
            let (_, t) = tensors
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != shape {
                return Err(NnError::Checkpoint(format!(
                    "tensor {name}: shape {:?} does not match {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        for p in &mut self.params {
            p.value = lookup(&p.name, p.value.shape())?;
        }
        for (name, b) in &mut self.buffers {
            *b = lookup(name, b.shape())?;
        }
        Ok(())
    }
}

/// Uniform initialization in `±sqrt(1 / fan_in)`.
pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound))
}

/// Fully connected layer `y = xW + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: usize,
    bias: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), uniform_fan_in(&[din, dout], din, rng));
        let bias = store.add(format!("{name}.bias"), uniform_fan_in(&[dout], din, rng));
        Self { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let w = store.bind(tape, self.weight, mode.records_grad());
        let b = store.bind(tape, self.bias, mode.records_grad());
        tape.linear(x, w, b)
    }
}

/// Bias-free 2-d convolution; kernel `[cout, cin, k, k]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        size: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let shape = [cout, cin, size, size];
        let kernel = store.add(format!("{name}.kernel"), uniform_fan_in(&shape, cin * size * size, rng));
        Self { kernel, stride, pad }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let k = store.bind(tape, self.kernel, mode.records_grad());
        tape.conv2d(x, k, self.stride, self.pad)
    }
}

/// Bias-free transposed convolution; kernel `[cin, cout, k, k]`.
#[derive(Clone, Debug)]
pub struct Deconv2d {
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Deconv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        size: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let shape = [cin, cout, size, size];
        // each output pixel sees about cin·(size/stride)² inputs
        let fan_in = cin * (size / stride).max(1).pow(2);
        let kernel = store.add(format!("{name}.kernel"), uniform_fan_in(&shape, fan_in, rng));
        Self { kernel, stride, pad }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let k = store.bind(tape, self.kernel, mode.records_grad());
        tape.deconv2d(x, k, self.stride, self.pad)
    }
}

/// Learned per-channel additive bias.
#[derive(Clone, Debug)]
pub struct ChannelBias {
    bias: usize,
}

impl ChannelBias {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[channels]));
        Self { bias }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let b = store.bind(tape, self.bias, mode.records_grad());
        tape.channel_bias(x, b)
    }
}

/// Batch normalization over axis 1 with running statistics for eval mode.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    gamma: usize,
    beta: usize,
    running_mean: usize,
    running_var: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[channels]));
        let running_mean = store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels]));
        let running_var = store.add_buffer(format!("{name}.running_var"), Tensor::full(&[channels], 1.0));
        Self {
            gamma,
            beta,
            running_mean,
            running_var,
        }
    }

    /// Train and frozen modes normalize with batch statistics, and train mode
    /// also updates the running estimates; eval mode applies the running
    /// estimates.
    pub fn forward(&self, tape: &mut Tape, store: &mut ParamStore, x: Var, mode: Mode) -> Result<Var> {
        let gamma = store.bind(tape, self.gamma, mode.records_grad());
        let beta = store.bind(tape, self.beta, mode.records_grad());
        if mode == Mode::Eval {
            return tape.batch_norm_eval(
                x,
                gamma,
                beta,
                store.buffer(self.running_mean),
                store.buffer(self.running_var),
                BN_EPS,
            );
        }
        let (y, mean, var) = tape.batch_norm(x, gamma, beta, BN_EPS)?;
        if mode == Mode::Frozen {
            return Ok(y);
        }
        let shape = tape.value(x).shape();
        let count = (tape.value(x).len() / shape[1]) as f64;
        let unbias = count / (count - 1.0);
        for (r, m) in store.buffer_mut(self.running_mean).data_mut().iter_mut().zip(&mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, v) in store.buffer_mut(self.running_var).data_mut().iter_mut().zip(&var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
        }
        Ok(y)
    }
}
