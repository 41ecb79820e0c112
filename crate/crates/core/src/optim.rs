//! Adam optimizer over a flat list of parameter matrices.

use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub struct Adam<S: Scalar> {
    learning_rate: S,
    beta1: S,
    beta2: S,
    eps: S,
    step: u64,
    first: Vec<Matrix<S>>,
    second: Vec<Matrix<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(learning_rate: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            learning_rate: S::from_f64_lossy(learning_rate),
            beta1: S::from_f64_lossy(ADAM_BETA1),
            beta2: S::from_f64_lossy(ADAM_BETA2),
            eps: S::from_f64_lossy(ADAM_EPS),
            step: 0,
            first: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    /// One update over all parameters; `params` and `grads` must match the
    /// shapes given at construction, in order.
    pub fn step(&mut self, params: &mut [Matrix<S>], grads: &[Matrix<S>]) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let t = S::from_f64_lossy(self.step as f64);
        let bc1 = S::one() - self.beta1.powf(t);
        let bc2 = S::one() - self.beta2.powf(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            debug_assert_eq!(p.shape(), g.shape());
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = self.beta1 * *mv + (S::one() - self.beta1) * gv;
                *vv = self.beta2 * *vv + (S::one() - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
