//! Adam with bias correction, and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

/// Optimizer state: one `(m, v)` moment pair per parameter tensor, in a
/// fixed registration order that must match the order gradients are
/// applied in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(param_sizes: &[usize], eps: f64) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps,
            step: 0,
            moments: param_sizes.iter().map(|&n| (vec![0.0; n], vec![0.0; n])).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advance the shared step counter; call once before updating the
    /// tensors of one optimization step.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Bias-corrected update of one parameter tensor in place.
    pub fn update(&mut self, index: usize, lr: f64, params: &mut [f64], grads: &[f64]) {
        let (m, v) = &mut self.moments[index];
        debug_assert_eq!(m.len(), params.len());
        debug_assert_eq!(params.len(), grads.len());
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grads[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// L2 norm over a set of gradient slices.
pub fn global_norm<'a>(grads: impl Iterator<Item = &'a [f64]>) -> f64 {
    grads.flat_map(|g| g.iter()).map(|&v| v * v).sum::<f64>().sqrt()
}

/// Rescale all gradients by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = global_norm(grads.iter().map(|g| &**g));
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}
