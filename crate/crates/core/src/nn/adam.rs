use serde::{Deserialize, Serialize};

use super::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Trainable tensor with its gradient accumulator and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let n = value.len();
        Self {
            grad: Tensor::zeros(value.shape()),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            value,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn accumulate(&mut self, grad: &[T]) {
        for (g, &d) in self.grad.data_mut().iter_mut().zip(grad) {
            *g += d;
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// One bias-corrected Adam update; `step` counts from 1.
pub fn adam_step<T: Real>(
    config: &AdamConfig,
    value: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: f64,
) {
    debug_assert!(step >= 1);
    let b1 = config.beta1;
    let b2 = config.beta2;
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let (tb1, tb2) = (T::from_f64(b1), T::from_f64(b2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
    let (tc1, tc2) = (T::from_f64(c1), T::from_f64(c2));
    let (tlr, teps) = (T::from_f64(lr), T::from_f64(config.epsilon));
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = tb1 * m[i] + one_b1 * g;
        v[i] = tb2 * v[i] + one_b2 * g * g;
        let m_hat = m[i] / tc1;
        let v_hat = v[i] / tc2;
        value[i] -= tlr * m_hat / (v_hat.sqrt() + teps);
    }
}

impl<T: Real> Param<T> {
    pub fn adam(&mut self, config: &AdamConfig, step: u64, lr: f64) {
        adam_step(
            config,
            self.value.data_mut(),
            self.grad.data(),
            &mut self.m,
            &mut self.v,
            step,
            lr,
        );
    }
}
