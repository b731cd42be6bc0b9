//! Forward and backward kernels as pure functions over [`Tensor`]s.
//!
//! The autodiff tape in [`crate::tape`] composes these; they are public so the
//! individual passes can be tested against one another directly (for example
//! the transposed convolution is checked as the adjoint of the convolution).

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// `c = a·b + beta·c` for row/column-strided matrices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= span(m, k, rsa, csa), "gemm: lhs too short");
    assert!(b.len() >= span(k, n, rsb, csb), "gemm: rhs too short");
    assert!(c.len() >= span(m, n, rsc, csc), "gemm: output too short");
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn mismatch(op: &'static str, expected: impl Into<String>, got: &[usize]) -> NnError {
    NnError::ShapeMismatch {
        op,
        expected: expected.into(),
        got: got.to_vec(),
    }
}

// ---------------------------------------------------------------------------
// fully connected

/// `y = x·w + b` for `x: [batch, in]`, `w: [in, out]`, `b: [out]`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    x.expect_rank("fully_connected", 2)?;
    w.expect_rank("fully_connected", 2)?;
    let (batch, din) = (x.shape()[0], x.shape()[1]);
    let dout = w.shape()[1];
    if w.shape()[0] != din {
        return Err(mismatch("fully_connected", format!("weights [{din}, _]"), w.shape()));
    }
    b.expect_shape("fully_connected", &[dout])?;
    let mut y = Vec::with_capacity(batch * dout);
    for _ in 0..batch {
        y.extend_from_slice(b.data());
    }
    gemm(
        batch,
        din,
        dout,
        x.data(),
        (din, 1),
        w.data(),
        (dout, 1),
        1.0,
        &mut y,
        (dout, 1),
    );
    Ok(Tensor::raw(vec![batch, dout], y))
}

/// Returns `(dx, dw, db)`.
pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (batch, din) = (x.shape()[0], x.shape()[1]);
    let dout = w.shape()[1];
    let mut dx = vec![0.0; batch * din];
    // dx = dy · wᵀ
    gemm(
        batch,
        dout,
        din,
        dy.data(),
        (dout, 1),
        w.data(),
        (1, dout),
        0.0,
        &mut dx,
        (din, 1),
    );
    let mut dw = vec![0.0; din * dout];
    // dw = xᵀ · dy
    gemm(
        din,
        batch,
        dout,
        x.data(),
        (1, din),
        dy.data(),
        (dout, 1),
        0.0,
        &mut dw,
        (dout, 1),
    );
    let mut db = vec![0.0; dout];
    for row in dy.data().chunks_exact(dout) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    (
        Tensor::raw(vec![batch, din], dx),
        Tensor::raw(vec![din, dout], dw),
        Tensor::raw(vec![dout], db),
    )
}

// ---------------------------------------------------------------------------
// convolution

/// Geometry of a strided, zero-padded 2-d cross-correlation.
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(op: &'static str, input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if input.len() != 4 {
            return Err(mismatch(op, "input rank 4", input));
        }
        if kernel.len() != 4 {
            return Err(mismatch(op, "kernel rank 4", kernel));
        }
        if stride == 0 {
            return Err(NnError::InvalidArgument(format!("{op}: stride must be positive")));
        }
        let (batch, cin, h, w) = (input[0], input[1], input[2], input[3]);
        let (cout, kcin, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kcin != cin {
            return Err(mismatch(op, format!("kernel [_, {cin}, _, _]"), kernel));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(mismatch(op, "input not smaller than kernel", input));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            batch,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        })
    }

    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn in_sample(&self) -> usize {
        self.cin * self.h * self.w
    }

    fn out_sample(&self) -> usize {
        self.cout * self.oh * self.ow
    }

    /// Visits every (column index, input offset) pair that lands inside the
    /// unpadded input of one sample.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let npos = self.positions();
        for c in 0..self.cin {
            for a in 0..self.kh {
                for b in 0..self.kw {
                    let row = (c * self.kh + a) * self.kw + b;
                    for oy in 0..self.oh {
                        let iy = oy as isize * s + a as isize - p;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.ow {
                            let ix = ox as isize * s + b as isize - p;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            let offset = (c * self.h + iy as usize) * self.w + ix as usize;
                            f(row * npos + oy * self.ow + ox, offset);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, sample: &[f64], cols: &mut [f64]) {
        cols.fill(0.0);
        self.for_each_tap(|ci, xi| cols[ci] = sample[xi]);
    }

    fn col2im(&self, cols: &[f64], sample: &mut [f64]) {
        self.for_each_tap(|ci, xi| sample[xi] += cols[ci]);
    }
}

/// Cross-correlation of `x: [batch, cin, h, w]` with `k: [cout, cin, kh, kw]`.
pub fn conv2d_forward(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = ConvGeom::new("conv2d", x.shape(), k.shape(), stride, pad)?;
    let (patch, npos) = (g.patch(), g.positions());
    let mut cols = vec![0.0; patch * npos];
    let mut y = vec![0.0; g.batch * g.out_sample()];
    for (xs, ys) in x
        .data()
        .chunks_exact(g.in_sample().max(1))
        .zip(y.chunks_exact_mut(g.out_sample().max(1)))
    {
        g.im2col(xs, &mut cols);
        gemm(
            g.cout,
            patch,
            npos,
            k.data(),
            (patch, 1),
            &cols,
            (npos, 1),
            0.0,
            ys,
            (npos, 1),
        );
    }
    Ok(Tensor::raw(vec![g.batch, g.cout, g.oh, g.ow], y))
}

/// Gradient of [`conv2d_forward`] with respect to its input.
pub fn conv2d_backward_input(
    dy: &Tensor,
    k: &Tensor,
    input_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = ConvGeom::new("conv2d_backward_input", input_shape, k.shape(), stride, pad)?;
    dy.expect_shape("conv2d_backward_input", &[g.batch, g.cout, g.oh, g.ow])?;
    let (patch, npos) = (g.patch(), g.positions());
    let mut cols = vec![0.0; patch * npos];
    let mut dx = vec![0.0; g.batch * g.in_sample()];
    for (dys, dxs) in dy
        .data()
        .chunks_exact(g.out_sample().max(1))
        .zip(dx.chunks_exact_mut(g.in_sample().max(1)))
    {
        // cols = kᵀ · dy
        gemm(
            patch,
            g.cout,
            npos,
            k.data(),
            (1, patch),
            dys,
            (npos, 1),
            0.0,
            &mut cols,
            (npos, 1),
        );
        g.col2im(&cols, dxs);
    }
    Ok(Tensor::raw(input_shape.to_vec(), dx))
}

/// Gradient of [`conv2d_forward`] with respect to its kernel.
pub fn conv2d_backward_kernel(
    x: &Tensor,
    dy: &Tensor,
    kernel_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = ConvGeom::new("conv2d_backward_kernel", x.shape(), kernel_shape, stride, pad)?;
    dy.expect_shape("conv2d_backward_kernel", &[g.batch, g.cout, g.oh, g.ow])?;
    let (patch, npos) = (g.patch(), g.positions());
    let mut cols = vec![0.0; patch * npos];
    let mut dk = vec![0.0; g.cout * patch];
    for (xs, dys) in x
        .data()
        .chunks_exact(g.in_sample().max(1))
        .zip(dy.data().chunks_exact(g.out_sample().max(1)))
    {
        g.im2col(xs, &mut cols);
        // dk += dy · colsᵀ
        gemm(
            g.cout,
            npos,
            patch,
            dys,
            (npos, 1),
            &cols,
            (1, npos),
            1.0,
            &mut dk,
            (patch, 1),
        );
    }
    Ok(Tensor::raw(kernel_shape.to_vec(), dk))
}

/// Output extent of a transposed convolution along one axis.
pub fn deconv_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    ((input.checked_sub(1)?) * stride + kernel).checked_sub(2 * pad)
}

/// Transposed convolution of `x: [batch, cin, h, w]` with `k: [cin, cout, kh, kw]`.
///
/// The kernel uses the layout of the convolution it transposes, so this is
/// exactly [`conv2d_backward_input`] with `x` in the role of the output
/// gradient.
pub fn deconv2d_forward(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    x.expect_rank("deconv2d", 4)?;
    k.expect_rank("deconv2d", 4)?;
    if k.shape()[0] != x.shape()[1] {
        return Err(mismatch(
            "deconv2d",
            format!("kernel [{}, _, _, _]", x.shape()[1]),
            k.shape(),
        ));
    }
    let extent = |i: usize, kk: usize| {
        deconv_extent(i, kk, stride, pad)
            .filter(|&e| e > 0)
            .ok_or_else(|| mismatch("deconv2d", "positive output extent", x.shape()))
    };
    let oh = extent(x.shape()[2], k.shape()[2])?;
    let ow = extent(x.shape()[3], k.shape()[3])?;
    let out_shape = [x.shape()[0], k.shape()[1], oh, ow];
    conv2d_backward_input(x, k, &out_shape, stride, pad)
}

/// Returns `(dx, dk)` for [`deconv2d_forward`].
pub fn deconv2d_backward(x: &Tensor, k: &Tensor, dy: &Tensor, stride: usize, pad: usize) -> Result<(Tensor, Tensor)> {
    let dx = conv2d_forward(dy, k, stride, pad)?;
    let dk = conv2d_backward_kernel(dy, x, k.shape(), stride, pad)?;
    Ok((dx, dk))
}

// ---------------------------------------------------------------------------
// per-channel ops

fn channel_layout(op: &'static str, x: &Tensor, channels: usize) -> Result<(usize, usize)> {
    if x.shape().len() < 2 || x.shape()[1] != channels {
        return Err(mismatch(op, format!("[batch, {channels}, ...]"), x.shape()));
    }
    let spatial = x.shape()[2..].iter().product();
    Ok((x.shape()[0], spatial))
}

/// Adds `bias[c]` to every element of channel `c` of `x: [batch, c, ...]`.
pub fn channel_bias_forward(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    bias.expect_rank("channel_bias", 1)?;
    let c = bias.shape()[0];
    let (_, spatial) = channel_layout("channel_bias", x, c)?;
    let mut y = x.data().to_vec();
    for (i, v) in y.iter_mut().enumerate() {
        *v += bias.data()[(i / spatial.max(1)) % c];
    }
    Ok(Tensor::raw(x.shape().to_vec(), y))
}

pub fn channel_bias_backward(dy: &Tensor, channels: usize) -> Tensor {
    let spatial: usize = dy.shape()[2..].iter().product();
    let mut db = vec![0.0; channels];
    for (i, v) in dy.data().iter().enumerate() {
        db[(i / spatial.max(1)) % channels] += v;
    }
    Tensor::raw(vec![channels], db)
}

/// Saved statistics of a train-mode batch normalization.
#[derive(Clone, Debug)]
pub struct BatchNormStats {
    pub normalized: Tensor,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Train-mode batch normalization over every axis except the channel axis 1.
pub fn batch_norm_forward(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<(Tensor, BatchNormStats)> {
    gamma.expect_rank("batch_norm", 1)?;
    let c = gamma.shape()[0];
    beta.expect_shape("batch_norm", &[c])?;
    let (batch, spatial) = channel_layout("batch_norm", x, c)?;
    if batch < 2 {
        return Err(NnError::BatchTooSmall(batch));
    }
    let count = (batch * spatial) as f64;
    let idx = |n: usize, ch: usize, s: usize| (n * c + ch) * spatial + s;
    let xd = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut acc = 0.0;
        for n in 0..batch {
            for s in 0..spatial {
                acc += xd[idx(n, ch, s)];
            }
        }
        mean[ch] = acc / count;
        let mut acc = 0.0;
        for n in 0..batch {
            for s in 0..spatial {
                let d = xd[idx(n, ch, s)] - mean[ch];
                acc += d * d;
            }
        }
        var[ch] = acc / count;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; xd.len()];
    let mut y = vec![0.0; xd.len()];
    for (i, &v) in xd.iter().enumerate() {
        let ch = (i / spatial) % c;
        let h = (v - mean[ch]) * inv_std[ch];
        xhat[i] = h;
        y[i] = gamma.data()[ch] * h + beta.data()[ch];
    }
    let stats = BatchNormStats {
        normalized: Tensor::raw(x.shape().to_vec(), xhat),
        mean,
        var,
        inv_std,
    };
    Ok((Tensor::raw(x.shape().to_vec(), y), stats))
}

/// Returns `(dx, dgamma, dbeta)` for [`batch_norm_forward`].
pub fn batch_norm_backward(dy: &Tensor, gamma: &Tensor, stats: &BatchNormStats) -> (Tensor, Tensor, Tensor) {
    let c = gamma.shape()[0];
    let spatial: usize = dy.shape()[2..].iter().product();
    let count = (dy.len() / c) as f64;
    let xhat = stats.normalized.data();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (i, &g) in dy.data().iter().enumerate() {
        let ch = (i / spatial) % c;
        dbeta[ch] += g;
        dgamma[ch] += g * xhat[i];
    }
    let mut dx = vec![0.0; dy.len()];
    for (i, &g) in dy.data().iter().enumerate() {
        let ch = (i / spatial) % c;
        let scale = gamma.data()[ch] * stats.inv_std[ch] / count;
        dx[i] = scale * (count * g - dbeta[ch] - xhat[i] * dgamma[ch]);
    }
    (
        Tensor::raw(dy.shape().to_vec(), dx),
        Tensor::raw(vec![c], dgamma),
        Tensor::raw(vec![c], dbeta),
    )
}

/// Eval-mode batch normalization with fixed statistics.
pub fn batch_norm_eval_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f64,
) -> Result<(Tensor, Tensor)> {
    let c = gamma.shape()[0];
    beta.expect_shape("batch_norm", &[c])?;
    mean.expect_shape("batch_norm", &[c])?;
    var.expect_shape("batch_norm", &[c])?;
    let (_, spatial) = channel_layout("batch_norm", x, c)?;
    let inv: Vec<f64> = var.data().iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for (i, &v) in x.data().iter().enumerate() {
        let ch = (i / spatial.max(1)) % c;
        let h = (v - mean.data()[ch]) * inv[ch];
        xhat[i] = h;
        y[i] = gamma.data()[ch] * h + beta.data()[ch];
    }
    Ok((
        Tensor::raw(x.shape().to_vec(), y),
        Tensor::raw(x.shape().to_vec(), xhat),
    ))
}

// ---------------------------------------------------------------------------
// elementwise

pub fn leaky_relu(v: f64, slope: f64) -> f64 {
    v.max(slope * v)
}

/// Derivative of [`leaky_relu`]; the subgradient at zero is `slope`.
pub fn leaky_relu_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<f64> {
    targets.expect_shape("bce_loss", logits.shape())?;
    let n = logits.len().max(1) as f64;
    let total: f64 = logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
        .sum();
    Ok(total / n)
}

pub fn bce_with_logits_backward(logits: &Tensor, targets: &Tensor, dloss: f64) -> Tensor {
    let n = logits.len().max(1) as f64;
    let d = logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &t)| dloss * (sigmoid(z) - t) / n)
        .collect();
    Tensor::raw(logits.shape().to_vec(), d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity_and_bias() {
        let x = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.0);
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let zero = Tensor::zeros(&[3]);
        assert_eq!(linear_forward(&x, &eye, &zero).unwrap(), x);

        let b = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = linear_forward(&Tensor::zeros(&[2, 3]), &eye, &b).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn linear_shape_mismatch() {
        let x = Tensor::zeros(&[2, 3]);
        let w = Tensor::zeros(&[4, 2]);
        assert!(linear_forward(&x, &w, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn unit_kernel_conv_is_identity() {
        let x = Tensor::from_fn(&[2, 1, 3, 4], |i| (i as f64).sin());
        let k = Tensor::full(&[1, 1, 1, 1], 1.0);
        assert_eq!(conv2d_forward(&x, &k, 1, 0).unwrap(), x);
        assert_eq!(deconv2d_forward(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn zero_input_conv_is_zero() {
        let x = Tensor::zeros(&[1, 2, 6, 6]);
        let k = Tensor::from_fn(&[3, 2, 4, 4], |i| i as f64);
        let y = conv2d_forward(&x, &k, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stride_two_deconv_doubles_extent() {
        let x = Tensor::zeros(&[1, 4, 3, 3]);
        let k = Tensor::zeros(&[4, 2, 4, 4]);
        assert_eq!(deconv2d_forward(&x, &k, 2, 1).unwrap().shape(), &[1, 2, 6, 6]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 2, 2]);
        assert!(conv2d_forward(&x, &k, 1, 0).is_err());
    }

    #[test]
    fn leaky_relu_values() {
        assert_eq!(leaky_relu(3.0, 0.2), 3.0);
        assert!((leaky_relu(-1.0, 0.2) + 0.2).abs() < 1e-15);
        assert_eq!(leaky_relu(0.0, 0.2), 0.0);
        assert_eq!(leaky_relu_grad(0.0, 0.2), 0.2);
    }

    #[test]
    fn sigmoid_and_bce_limits() {
        assert_eq!(sigmoid(0.0), 0.5);
        let t = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let far = Tensor::new(vec![2], vec![40.0, -40.0]).unwrap();
        assert!(bce_with_logits(&far, &t).unwrap() < 1e-15);
        let near = Tensor::new(vec![2], vec![5.0, -5.0]).unwrap();
        assert!(bce_with_logits(&near, &t).unwrap() < 1e-2);
    }

    #[test]
    fn batch_norm_rejects_single_sample() {
        let x = Tensor::zeros(&[1, 2]);
        let g = Tensor::full(&[2], 1.0);
        assert!(matches!(
            batch_norm_forward(&x, &g, &Tensor::zeros(&[2]), 1e-5),
            Err(NnError::BatchTooSmall(1))
        ));
    }
}
