use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_EPSILON: f64 = 1e-5;

/// Bias-corrected Adam moments for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self::with_epsilon(num_params, learning_rate, ADAM_EPSILON)
    }

    pub fn with_epsilon(num_params: usize, learning_rate: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            epsilon,
            beta1: 0.9,
            beta2: 0.999,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// Apply one descent step to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::arg(format!(
                "adam shape mismatch: params {}, grads {}, state {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_size() {
        // m_hat = v_hat = 1 on the first step, so the move is lr / (1 + eps)
        let mut adam = AdamState::new(1, 0.1);
        let mut p = vec![0.0];
        adam.step(&mut p, &[1.0]).unwrap();
        let expected = 0.1 / (1.0 + 1e-5);
        assert!((p[0] + expected).abs() < 1e-15);
        assert!((expected - 0.099999).abs() < 1e-6);
    }

    #[test]
    fn symmetric_parameters_move_together() {
        let mut adam = AdamState::new(2, 0.01);
        let mut p = vec![0.3, 0.3];
        for g in [0.5, -1.0, 2.0] {
            adam.step(&mut p, &[g, g]).unwrap();
        }
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut adam = AdamState::new(2, 0.01);
        let mut p = vec![0.0; 3];
        assert!(matches!(adam.step(&mut p, &[0.0; 3]), Err(Error::Argument(_))));
    }
}
