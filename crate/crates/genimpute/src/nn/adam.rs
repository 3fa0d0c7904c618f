use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam optimizer state.
///
/// Moment buffers are stored per parameter tensor, matching the flat layout
/// of [`super::DenseNet::param_slices`]. `step_count` increments by exactly
/// one per [`AdamState::step`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, tensor_sizes: &[usize]) -> Self {
        AdamState {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_net(learning_rate: f64, beta1: f64, beta2: f64, net: &super::DenseNet) -> Self {
        let sizes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self::new(learning_rate, beta1, beta2, &sizes)
    }

    /// Applies one update: `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`,
    /// `p -= lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected moments.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != self.first_moment.len() {
            return Err(Error::shape(
                "adam step",
                format!("{} tensors", self.first_moment.len()),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            if param.len() != grad.len() || param.len() != m.len() {
                return Err(Error::shape(
                    "adam step tensor",
                    format!("{}", m.len()),
                    format!("{} params / {} grads", param.len(), grad.len()),
                ));
            }
            for i in 0..param.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
