//! Named parameters and the Adam optimizer.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Trainable tensor with a name unique within its learner.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Parameter {
            name: name.into(),
            value,
            grad: None,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    /// Standard hyperparameters (β1 = 0.9, β2 = 0.999, ε = 1e-8).
    pub fn new(params: &[Parameter], learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Gradients are left in place.
pub fn adam_step(params: &mut [Parameter], state: &mut AdamState) -> Result<()> {
    if params.len() != state.first_moment.len() {
        return Err(Error::Config(format!(
            "optimizer tracks {} parameters, got {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.first_moment) {
        let grad = p.grad.as_ref().ok_or_else(|| Error::MissingGrad(p.name.clone()))?;
        if grad.shape() != p.value.shape() || m.shape() != p.value.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("parameter `{}` {:?} vs grad {:?}", p.name, p.value.shape(), grad.shape()),
            ));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.eps;

    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        let g = p.grad.as_ref().expect("checked above").data();
        let w = p.value.data_mut();
        let (m, v) = (m.data_mut(), v.data_mut());
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(w: f64) -> Parameter {
        Parameter::new("w", Tensor::scalar(w))
    }

    #[test]
    fn step_moves_downhill() {
        let mut params = vec![scalar_param(1.0)];
        let mut state = AdamState::new(&params, 0.1);
        params[0].grad = Some(Tensor::scalar(2.0)); // d/dw w² at w = 1
        adam_step(&mut params, &mut state).unwrap();
        assert!(params[0].value.item() < 1.0);
        assert_eq!(state.step_count(), 1);
        assert!(params[0].grad.is_some());
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut params = vec![scalar_param(0.7)];
        let mut state = AdamState::new(&params, 0.1);
        params[0].grad = Some(Tensor::scalar(0.0));
        adam_step(&mut params, &mut state).unwrap();
        assert_eq!(params[0].value.item(), 0.7);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut params = vec![scalar_param(1.0)];
        let mut state = AdamState::new(&params, 0.1);
        match adam_step(&mut params, &mut state) {
            Err(Error::MissingGrad(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(w) = (w - 3)², minimizer w* = 3.
        let mut params = vec![scalar_param(0.0)];
        let mut state = AdamState::new(&params, 0.1);
        for _ in 0..200 {
            let w = params[0].value.item();
            params[0].grad = Some(Tensor::scalar(2.0 * (w - 3.0)));
            adam_step(&mut params, &mut state).unwrap();
        }
        assert!((params[0].value.item() - 3.0).abs() <= 1e-2, "{}", params[0].value.item());
    }
}
