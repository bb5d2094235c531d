//! Adam optimizer with bias-corrected moment estimates.

use super::NnError;

/// Adam state: one pair of moment accumulators per parameter block, plus the
/// shared step counter.
///
/// Defaults are the standard rates `lr = 1e-3`, `beta1 = 0.9`,
/// `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// State for parameter blocks of the given sizes, with default rates.
    pub fn new(lr: f64, block_sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: block_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: block_sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First-moment accumulator of block `i` (inspection/testing).
    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    /// One update: `p -= lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected
    /// moments. `params` and `grads` must match the sizes given at
    /// construction; a non-finite gradient aborts before touching any
    /// parameter.
    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                context: "Adam blocks",
                expected: vec![self.m.len()],
                got: vec![params.len(), grads.len()],
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.m[i].len() {
                return Err(NnError::ShapeMismatch {
                    context: "Adam block size",
                    expected: vec![self.m[i].len()],
                    got: vec![g.len()],
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient { index: i });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            for k in 0..g.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
