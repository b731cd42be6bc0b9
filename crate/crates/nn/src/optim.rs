//! ADAM and plain gradient descent over a [`Parameter`] slice.

use crate::error::{NnError, Result};
use crate::layers::Parameter;
use crate::tensor::Tensor;

/// Moment estimates carried between ADAM steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, with the DCGAN `beta1 = 0.5`.
    pub fn new(params: &[Parameter]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            first_moment: zeros(),
            second_moment: zeros(),
            step_count: 0,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

fn check_grads(params: &[Parameter]) -> Result<()> {
    for p in params {
        if p.grad.shape() != p.value.shape() {
            return Err(NnError::ShapeMismatch {
                op: "optimizer",
                expected: format!("gradient shaped like {:?} for {}", p.value.shape(), p.name),
                got: p.grad.shape().to_vec(),
            });
        }
        if !p.grad.is_finite() {
            return Err(NnError::NonFinite(format!("gradient of {}", p.name)));
        }
    }
    Ok(())
}

/// One bias-corrected ADAM update using each parameter's stored gradient.
pub fn adam_step(params: &mut [Parameter], state: &mut AdamState, lr: f64) -> Result<()> {
    if state.first_moment.len() != params.len() {
        return Err(NnError::InvalidArgument(format!(
            "adam state tracks {} parameters, got {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    check_grads(params)?;
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, m), v) in params
        .iter_mut()
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        let g = p.grad.data();
        let (m, v) = (m.data_mut(), v.data_mut());
        for (i, w) in p.value.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `p ← p − lr·g` for every parameter.
pub fn sgd_step(params: &mut [Parameter], lr: f64) -> Result<()> {
    check_grads(params)?;
    for p in params {
        for (w, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *w -= lr * g;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Parameter {
        let mut p = Parameter::new("p", Tensor::scalar(v));
        p.grad = Tensor::scalar(g);
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = vec![scalar_param(1.5, 0.0)];
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &mut st, 0.1).unwrap();
        assert_eq!(ps[0].value.data()[0], 1.5);
        sgd_step(&mut ps, 0.1).unwrap();
        assert_eq!(ps[0].value.data()[0], 1.5);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut ps = vec![scalar_param(0.0, 1.0)];
        let mut st = AdamState::new(&ps);
        adam_step(&mut ps, &mut st, 0.0002).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −lr / (1 + ε)
        let expected = -0.0002 / (1.0 + 1e-8);
        assert!((ps[0].value.data()[0] - expected).abs() < 1e-18);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn sgd_arithmetic() {
        let mut ps = vec![scalar_param(1.0, 2.0)];
        sgd_step(&mut ps, 0.1).unwrap();
        assert!((ps[0].value.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // (p − 3)², gradient 2(p − 3); contraction factor 0.8 per step
        let mut ps = vec![scalar_param(0.0, 0.0)];
        let mut steps = 0;
        while (ps[0].value.data()[0] - 3.0).abs() >= 1e-6 {
            ps[0].grad = Tensor::scalar(2.0 * (ps[0].value.data()[0] - 3.0));
            sgd_step(&mut ps, 0.1).unwrap();
            steps += 1;
            assert!(steps <= 500);
        }
        assert!(steps < 100);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut ps = vec![scalar_param(1.0, f64::INFINITY)];
        let mut st = AdamState::new(&ps);
        let err = adam_step(&mut ps, &mut st, 0.1).unwrap_err();
        assert!(err.to_string().contains("gradient of p"));
        assert!(sgd_step(&mut ps, 0.1).is_err());
    }
}
