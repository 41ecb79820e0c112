//! Gaussian feature-noise model: `C̃ = (1 - α) C + α n`.
//!
//! Noise goes into content features only; position features are never
//! perturbed. The noise sample depends on the seed and the matrix shape,
//! not on the feature values, so `α = 1` wipes the content entirely.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn inject_feature_noise<S: Scalar>(
    content: &Matrix<S>,
    alpha: f64,
    seed: u64,
) -> Result<Matrix<S>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument {
            op: "inject_feature_noise",
            msg: format!("alpha={alpha} outside [0, 1]"),
        });
    }
    if alpha == 0.0 {
        return Ok(content.clone());
    }
    let mut rng = rng_from_seed(seed);
    let keep = S::from_f64_lossy(1.0 - alpha);
    let mix = S::from_f64_lossy(alpha);
    let mut out = content.clone();
    for v in out.data_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v = keep * *v + mix * S::from_f64_lossy(n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_zero_is_bit_identical() {
        let c = Matrix::from_rows(&[vec![1.5f64, -2.25], vec![0.0, 3.125]]);
        assert_eq!(inject_feature_noise(&c, 0.0, 99).unwrap(), c);
    }

    #[test]
    fn alpha_one_ignores_the_input() {
        let a = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![-9.0f64, 7.5], vec![0.25, 100.0]]);
        let na = inject_feature_noise(&a, 1.0, 5).unwrap();
        let nb = inject_feature_noise(&b, 1.0, 5).unwrap();
        assert_eq!(na, nb);
        assert_ne!(na, a);
    }

    #[test]
    fn moments_match_at_half_mix() {
        // alpha = 0.5, C = 0: entries are 0.5 * N(0,1), so mean 0, var 0.25.
        let c = Matrix::<f64>::zeros(1000, 100);
        let n = inject_feature_noise(&c, 0.5, 7).unwrap();
        let count = (n.rows() * n.cols()) as f64;
        let mean: f64 = n.data().iter().sum::<f64>() / count;
        let var: f64 = n.data().iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / count;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 0.25).abs() < 0.25 * 0.05, "var {var}");
    }

    #[test]
    fn out_of_range_alpha_is_rejected() {
        let c = Matrix::<f64>::zeros(1, 1);
        assert!(inject_feature_noise(&c, -0.1, 0).is_err());
        assert!(inject_feature_noise(&c, 1.1, 0).is_err());
    }

    #[test]
    fn original_matrix_is_unmodified() {
        let c = Matrix::from_rows(&[vec![1.0f64, 2.0]]);
        let before = c.clone();
        let _ = inject_feature_noise(&c, 0.7, 3).unwrap();
        assert_eq!(c, before);
    }
}
