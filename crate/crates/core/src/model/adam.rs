use serde::{Deserialize, Serialize};

use super::params::Parameters;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one matrix per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|(_, t)| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState, hyper: &AdamHyper) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let grads = grads.tensors();
    for (((_, p), (_, g)), (m, v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((p, &g), m), v) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Two(Matrix);

    impl Parameters for Two {
        fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
            vec![("w", &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
            vec![("w", &mut self.0)]
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Two(Matrix::row_vector(&[1.0, -2.0]));
        let g = p.zeros_like();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamHyper::default());
        assert_eq!(p.0.as_slice(), &[1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Two(Matrix::row_vector(&[0.0, 0.0]));
        let g = Two(Matrix::row_vector(&[1.0, -1.0]));
        let mut s = AdamState::new(&p);
        let hyper = AdamHyper {
            learning_rate: 0.1,
            ..Default::default()
        };
        adam_step(&mut p, &g, &mut s, &hyper);
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps)
        let expected = 0.1 / (1.0 + 1e-8);
        assert!((p.0[(0, 0)] + expected).abs() < 1e-15);
        assert_eq!(p.0[(0, 0)], -p.0[(0, 1)]);
    }
}
