//! Affine layer shared by the teacher and the student.

use crate::matrix::Matrix;
use crate::scalar::Scalar;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<S: Scalar> {
    pub weight: Matrix<S>,
    /// Row vector `1 x d_out`, broadcast over rows.
    pub bias: Matrix<S>,
}

impl<S: Scalar> DenseLayer<S> {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.is_finite()
    }
}

/// Weights uniform in `[-1/sqrt(d_in), 1/sqrt(d_in)]`, bias zero. This is
/// the documented initialization for every trainable layer.
pub fn init_dense<S: Scalar>(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> DenseLayer<S> {
    let bound = 1.0 / (d_in.max(1) as f64).sqrt();
    let data: Vec<S> = (0..d_in * d_out)
        .map(|_| S::from_f64_lossy(rng.random_range(-bound..bound)))
        .collect();
    DenseLayer {
        weight: Matrix::new(d_in, d_out, data).expect("sized above"),
        bias: Matrix::zeros(1, d_out),
    }
}

/// Square matrix with the same uniform rule, used for the representation
/// transform.
pub fn init_square<S: Scalar>(rng: &mut ChaCha8Rng, dim: usize) -> Matrix<S> {
    let bound = 1.0 / (dim.max(1) as f64).sqrt();
    let data: Vec<S> = (0..dim * dim)
        .map(|_| S::from_f64_lossy(rng.random_range(-bound..bound)))
        .collect();
    Matrix::new(dim, dim, data).expect("sized above")
}
