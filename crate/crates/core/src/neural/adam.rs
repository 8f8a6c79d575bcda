//! Adam optimiser with bias correction folded into the step size.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(&p.dims)).collect();
        Self { t: 0, m: zeros(), v: zeros() }
    }

    /// One update. Uses `lr_t = lr * sqrt(1 - b2^t) / (1 - b1^t)` and
    /// `theta -= lr_t * m / (sqrt(v) + eps)`.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], hp: &AdamParams) {
        self.t += 1;
        let t = self.t as i32;
        let lr_t = hp.learning_rate * (1.0 - hp.beta2.powi(t)).sqrt() / (1.0 - hp.beta1.powi(t));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
                v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
                p[i] -= lr_t * m[i] / (v[i].sqrt() + hp.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        let hp = AdamParams::default();
        let mut p = vec![Tensor::zeros(&[1])];
        let mut s = AdamState::new(&p);
        s.step(&mut p, &[Tensor::from_vec(&[1], vec![1.0])], &hp);
        let expected = -1e-3 / (1.0 + 1e-8 / (1.0f64 - 0.999).sqrt());
        assert!((p[0][0] - expected).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_is_a_no_op_and_updates_are_elementwise() {
        let hp = AdamParams::default();
        let mut p = vec![Tensor::from_vec(&[3], vec![0.5, 0.5, -2.0])];
        let mut s = AdamState::new(&p);
        for k in 0..5 {
            let g = 0.3 * k as f64 - 0.4;
            s.step(&mut p, &[Tensor::from_vec(&[3], vec![g, g, 0.0])], &hp);
        }
        assert_eq!(p[0][0], p[0][1]);
        assert_eq!(p[0][2], -2.0);
    }
}
