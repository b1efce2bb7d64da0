//! Bias-corrected Adam.

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum AdamError {
    #[error("gradient count {grads} does not match parameter count {params}")]
    Misaligned { params: usize, grads: usize },
    #[error("gradient shape {got:?} does not match parameter shape {expected:?} at slot {index}")]
    ShapeMismatch { index: usize, expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite gradient at parameter slot {index}")]
    NonFiniteGradient { index: usize },
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: f64, params: &[&Tensor]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over aligned parameter/gradient lists.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), AdamError> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(AdamError::Misaligned { params: params.len(), grads: grads.len() });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(AdamError::ShapeMismatch {
                    index: i,
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(AdamError::NonFiniteGradient { index: i });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            let p = params[i].data_mut();
            let g = grads[i].data();
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let mut state = AdamState::new(0.001, &[&p]);
        let g = Tensor::zeros(vec![3]);
        state.step(&mut [&mut p], &[g]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 3.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_about_lr() {
        let mut p = Tensor::scalar(5.0);
        let mut state = AdamState::new(0.001, &[&p]);
        state.step(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        // At t=1 the bias-corrected update is lr * 1 / (1 + eps).
        let expected = 5.0 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-15);
        assert!((p.item() - 4.999).abs() < 1e-9);
    }

    #[test]
    fn identical_calls_from_identical_states_agree() {
        let run = || {
            let mut p = Tensor::vector(vec![0.5, -0.5]);
            let mut state = AdamState::new(0.01, &[&p]);
            for _ in 0..5 {
                let g = Tensor::vector(vec![0.3, -0.1]);
                state.step(&mut [&mut p], &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = Tensor::scalar(1.0);
        let mut state = AdamState::new(0.001, &[&p]);
        let err = state.step(&mut [&mut p], &[Tensor::scalar(f64::NAN)]).unwrap_err();
        assert!(matches!(err, AdamError::NonFiniteGradient { index: 0 }));
    }
}
