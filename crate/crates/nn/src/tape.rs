//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Tape`] records every operation applied during one forward pass.
//! [`Tape::backward`] walks the tape in reverse and returns the gradient of a
//! scalar output with respect to every recorded value. Tapes are built per
//! training step and dropped afterwards.

use crate::error::{NnError, Result};
use crate::kernels::{self, BatchNormStats};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Identifies a parameter leaf: which store it came from and its index there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamKey {
    pub store: u32,
    pub index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv2d {
        x: Var,
        k: Var,
        stride: usize,
        pad: usize,
    },
    Deconv2d {
        x: Var,
        k: Var,
        stride: usize,
        pad: usize,
    },
    ChannelBias {
        x: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: BatchNormStats,
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sigmoid {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    BceWithLogits {
        x: Var,
        targets: Tensor,
    },
    Add {
        a: Var,
        b: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamKey>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of leaf values produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input that needs no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false, None)
    }

    /// Records an input whose gradient is wanted.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true, None)
    }

    /// Records a parameter leaf tagged with its store key.
    pub fn parameter(&mut self, value: Tensor, key: ParamKey, requires_grad: bool) -> Var {
        self.leaf(value, requires_grad, Some(key))
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool, param: Option<ParamKey>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Parameter leaves recorded on this tape.
    pub fn parameters(&self) -> impl Iterator<Item = (Var, ParamKey)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|k| (Var(i), k)))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = kernels::linear_forward(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = kernels::conv2d_forward(self.value(x), self.value(k), stride, pad)?;
        Ok(self.push(y, Op::Conv2d { x, k, stride, pad }, &[x, k]))
    }

    pub fn deconv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = kernels::deconv2d_forward(self.value(x), self.value(k), stride, pad)?;
        Ok(self.push(y, Op::Deconv2d { x, k, stride, pad }, &[x, k]))
    }

    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let y = kernels::channel_bias_forward(self.value(x), self.value(b))?;
        Ok(self.push(y, Op::ChannelBias { x, b }, &[x, b]))
    }

    /// Train-mode batch normalization. Returns the output and the batch
    /// mean and (biased) variance per channel.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (y, stats) = kernels::batch_norm_forward(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let (mean, var) = (stats.mean.clone(), stats.var.clone());
        let v = self.push(y, Op::BatchNorm { x, gamma, beta, stats }, &[x, gamma, beta]);
        Ok((v, mean, var))
    }

    /// Eval-mode batch normalization with fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &Tensor,
        var: &Tensor,
        eps: f64,
    ) -> Result<Var> {
        let (y, normalized) =
            kernels::batch_norm_eval_forward(self.value(x), self.value(gamma), self.value(beta), mean, var, eps)?;
        let inv_std = var.data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        Ok(self.push(
            y,
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| kernels::leaky_relu(v, slope)).collect();
        let y = Tensor::raw(src.shape().to_vec(), data);
        self.push(y, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| kernels::sigmoid(v)).collect();
        let y = Tensor::raw(src.shape().to_vec(), data);
        self.push(y, Op::Sigmoid { x }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        Ok(self.push(y, Op::Reshape { x }, &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut y = self.value(a).clone();
        self.value(b).expect_shape("add", y.shape())?;
        y.add_assign(self.value(b));
        Ok(self.push(y, Op::Add { a, b }, &[a, b]))
    }

    /// Mean binary cross-entropy between `sigmoid(x)` and fixed targets,
    /// computed from logits for numerical stability.
    pub fn bce_with_logits(&mut self, x: Var, targets: Tensor) -> Result<Var> {
        let loss = kernels::bce_with_logits(self.value(x), &targets)?;
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits { x, targets }, &[x]))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(NnError::ShapeMismatch {
                op: "backward",
                expected: "scalar output".into(),
                got: self.value(output).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(self.value(output).shape(), 1.0));

        for i in (0..=output.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                grads[i] = Some(dy);
                continue;
            }
            let wants = |v: Var| self.nodes[v.0].requires_grad;
            let send = |grads: &mut Vec<Option<Tensor>>, v: Var, g: Tensor| {
                if !wants(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) = kernels::linear_backward(self.value(*x), self.value(*w), &dy);
                    send(&mut grads, *x, dx);
                    send(&mut grads, *w, dw);
                    send(&mut grads, *b, db);
                }
                Op::Conv2d { x, k, stride, pad } => {
                    if wants(*x) {
                        let dx =
                            kernels::conv2d_backward_input(&dy, self.value(*k), self.value(*x).shape(), *stride, *pad)?;
                        send(&mut grads, *x, dx);
                    }
                    if wants(*k) {
                        let dk = kernels::conv2d_backward_kernel(
                            self.value(*x),
                            &dy,
                            self.value(*k).shape(),
                            *stride,
                            *pad,
                        )?;
                        send(&mut grads, *k, dk);
                    }
                }
                Op::Deconv2d { x, k, stride, pad } => {
                    if wants(*x) {
                        let dx = kernels::conv2d_forward(&dy, self.value(*k), *stride, *pad)?;
                        send(&mut grads, *x, dx);
                    }
                    if wants(*k) {
                        let dk = kernels::conv2d_backward_kernel(
                            &dy,
                            self.value(*x),
                            self.value(*k).shape(),
                            *stride,
                            *pad,
                        )?;
                        send(&mut grads, *k, dk);
                    }
                }
                Op::ChannelBias { x, b } => {
                    let channels = self.value(*b).len();
                    send(&mut grads, *b, kernels::channel_bias_backward(&dy, channels));
                    send(&mut grads, *x, dy);
                }
                Op::BatchNorm { x, gamma, beta, stats } => {
                    let (dx, dg, db) = kernels::batch_norm_backward(&dy, self.value(*gamma), stats);
                    send(&mut grads, *x, dx);
                    send(&mut grads, *gamma, dg);
                    send(&mut grads, *beta, db);
                }
                Op::BatchNormEval {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let c = inv_std.len();
                    let spatial = dy.len() / (dy.shape()[0] * c).max(1);
                    let g = self.value(*gamma).data();
                    let mut dx = vec![0.0; dy.len()];
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for (j, &d) in dy.data().iter().enumerate() {
                        let ch = (j / spatial.max(1)) % c;
                        dx[j] = d * g[ch] * inv_std[ch];
                        dg[ch] += d * normalized.data()[j];
                        db[ch] += d;
                    }
                    send(&mut grads, *x, Tensor::raw(dy.shape().to_vec(), dx));
                    send(&mut grads, *gamma, Tensor::raw(vec![c], dg));
                    send(&mut grads, *beta, Tensor::raw(vec![c], db));
                }
                Op::LeakyRelu { x, slope } => {
                    let src = self.value(*x).data();
                    let d = dy
                        .data()
                        .iter()
                        .zip(src)
                        .map(|(g, &v)| g * kernels::leaky_relu_grad(v, *slope))
                        .collect();
                    send(&mut grads, *x, Tensor::raw(dy.shape().to_vec(), d));
                }
                Op::Sigmoid { x } => {
                    let d = dy
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, s)| g * s * (1.0 - s))
                        .collect();
                    send(&mut grads, *x, Tensor::raw(dy.shape().to_vec(), d));
                }
                Op::Reshape { x } => {
                    let shape = self.value(*x).shape().to_vec();
                    send(&mut grads, *x, Tensor::raw(shape, dy.data().to_vec()));
                }
                Op::BceWithLogits { x, targets } => {
                    let d = kernels::bce_with_logits_backward(self.value(*x), targets, dy.data()[0]);
                    send(&mut grads, *x, d);
                }
                Op::Add { a, b } => {
                    send(&mut grads, *a, dy.clone());
                    send(&mut grads, *b, dy);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_accumulates_over_reuse() {
        // loss = bce(x + x, t): d/dx = 2·(σ(2x) − t)/n
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::new(vec![2], vec![0.3, -0.7]).unwrap());
        let s = tape.add(x, x).unwrap();
        let t = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let loss = tape.bce_with_logits(s, t).unwrap();
        let g = tape.backward(loss).unwrap();
        let gx = g.get(x).unwrap().data();
        let expect = [
            2.0 * (kernels::sigmoid(0.6) - 1.0) / 2.0,
            2.0 * kernels::sigmoid(-1.4) / 2.0,
        ];
        assert!((gx[0] - expect[0]).abs() < 1e-15);
        assert!((gx[1] - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1], 2.0));
        let y = tape.sigmoid(x);
        let loss = tape.bce_with_logits(y, Tensor::full(&[1], 1.0)).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.get(x).is_none());
    }

    #[test]
    fn backward_needs_scalar() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::zeros(&[3]));
        assert!(tape.backward(x).is_err());
    }
}
