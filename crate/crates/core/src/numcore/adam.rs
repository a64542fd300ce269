use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction. Weight decay is the classic coupled form: the
/// term `weight_decay · θ` is added to the gradient before the moment updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    /// Zero moments shaped like `params`, with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(params: &[Tensor], lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    /// In-place update of `params`.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            p.check_same_shape(g)?;
            p.check_same_shape(m)?;
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut());
            for (((theta, &grad), m), v) in iter {
                let grad = grad + wd * *theta;
                *m = b1 * *m + (1.0 - b1) * grad;
                *v = b2 * *v + (1.0 - b2) * grad * grad;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`]: returns updated copies.
pub fn adam_step(
    params: &[Tensor],
    grads: &[Tensor],
    state: &AdamState,
) -> Result<(Vec<Tensor>, AdamState)> {
    let mut params = params.to_vec();
    let mut state = state.clone();
    state.step(&mut params, grads)?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let params = vec![Tensor::vector(vec![1.0, -2.0, 3.5]).unwrap()];
        let grads = vec![Tensor::zeros(&[3])];
        let state = AdamState::new(&params, 1e-3, 0.0);
        let (next, state) = adam_step(&params, &grads, &state).unwrap();
        assert_eq!(next, params);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let params = vec![Tensor::scalar(1.0)];
        let grads = vec![Tensor::scalar(1.0)];
        let state = AdamState::new(&params, 1e-3, 0.0);
        let (next, _) = adam_step(&params, &grads, &state).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction.
        let expect = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((next[0].data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn descends_quadratic() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut state = AdamState::new(&params, 1e-3, 0.0);
        let mut prev = 1.0f64;
        for step in 0..100 {
            let x = params[0].data()[0];
            let grads = vec![Tensor::scalar(2.0 * x)];
            state.step(&mut params, &grads).unwrap();
            let now = params[0].data()[0].abs();
            if step > 5 {
                assert!(now < prev);
            }
            prev = now;
        }
        // each step moves by at most about lr
        assert!(prev > 0.9 - 1e-6 && prev < 0.91, "ended at {prev}");
        assert_eq!(state.step_count, 100);
    }

    #[test]
    fn weight_decay_is_added_to_gradient() {
        let params = vec![Tensor::scalar(2.0)];
        let state = AdamState::new(&params, 0.1, 0.5);
        let (next, st) = adam_step(&params, &[Tensor::scalar(0.0)], &state).unwrap();
        // effective gradient 1.0 → moves by lr
        assert!((next[0].data()[0] - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
        assert!((st.first_moment[0].data()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let params = vec![Tensor::zeros(&[2])];
        let state = AdamState::new(&params, 1e-3, 0.0);
        assert!(adam_step(&params, &[Tensor::zeros(&[3])], &state).is_err());
    }
}
