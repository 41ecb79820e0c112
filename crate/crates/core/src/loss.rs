//! Classification losses, built on the tape so gradients are available.
//!
//! Both losses go through `log_softmax` (max-subtracted) so logits with
//! magnitude up to ~1e3 stay finite.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};

/// Mean over rows of `-log softmax(logits_row)[target_row]`.
pub fn softmax_cross_entropy<S: Scalar>(
    tape: &mut Tape<S>,
    logits: NodeId,
    targets: &[usize],
) -> Result<NodeId> {
    let (rows, classes) = tape.value(logits).shape();
    if targets.len() != rows {
        return Err(Error::InvalidArgument {
            op: "softmax_cross_entropy",
            msg: format!("{} targets for {rows} rows", targets.len()),
        });
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(Error::InvalidArgument {
                op: "softmax_cross_entropy",
                msg: format!("row {i}: class index {t} out of range [0, {classes})"),
            });
        }
    }
    if rows == 0 {
        return Err(Error::InvalidArgument {
            op: "softmax_cross_entropy",
            msg: "empty batch".into(),
        });
    }
    let logsm = tape.log_softmax_rows(logits)?;
    let picked = tape.select_per_row(logsm, targets.to_vec())?;
    let total = tape.sum(picked)?;
    tape.scale(total, -S::one() / S::from_f64_lossy(rows as f64))
}

/// Mean over rows of `Σ_k z_k (log z_k - log softmax(logits)_k)`, with
/// `0 · log 0 = 0`. Teacher rows must lie on the probability simplex.
pub fn kl_divergence<S: Scalar>(
    tape: &mut Tape<S>,
    teacher_probs: &Matrix<S>,
    student_logits: NodeId,
) -> Result<NodeId> {
    let (rows, classes) = tape.value(student_logits).shape();
    if teacher_probs.shape() != (rows, classes) {
        return Err(Error::ShapeMismatch {
            op: "kl_divergence",
            lhs: teacher_probs.shape(),
            rhs: (rows, classes),
        });
    }
    if rows == 0 {
        return Err(Error::InvalidArgument {
            op: "kl_divergence",
            msg: "empty batch".into(),
        });
    }
    validate_simplex_rows(teacher_probs, "kl_divergence")?;

    let inv_rows = S::one() / S::from_f64_lossy(rows as f64);
    // Teacher entropy term is constant w.r.t. the student.
    let mut entropy = S::zero();
    for i in 0..rows {
        for &z in teacher_probs.row(i) {
            if z > S::zero() {
                entropy += z * z.ln();
            }
        }
    }
    let logsm = tape.log_softmax_rows(student_logits)?;
    let z = tape.constant(teacher_probs.clone())?;
    let prod = tape.mul_elem(z, logsm)?;
    let total = tape.sum(prod)?;
    let cross = tape.scale(total, -inv_rows)?;
    let constant = tape.constant(Matrix::new(1, 1, vec![entropy * inv_rows])?)?;
    tape.add(cross, constant)
}

pub fn validate_simplex_rows<S: Scalar>(probs: &Matrix<S>, op: &'static str) -> Result<()> {
    let tol = S::from_f64_lossy(1e-6);
    for i in 0..probs.rows() {
        let mut sum = S::zero();
        for &z in probs.row(i) {
            if z < S::zero() {
                return Err(Error::InvalidArgument {
                    op,
                    msg: format!("row {i}: negative probability {z}"),
                });
            }
            sum += z;
        }
        if (sum - S::one()).abs() > tol {
            return Err(Error::InvalidArgument {
                op,
                msg: format!("row {i}: probabilities sum to {sum}, not 1"),
            });
        }
    }
    Ok(())
}

/// Eager cross-entropy value without a tape.
pub fn cross_entropy_value<S: Scalar>(logits: &Matrix<S>, targets: &[usize]) -> Result<S> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone())?;
    let loss = softmax_cross_entropy(&mut tape, l, targets)?;
    Ok(tape.scalar_value(loss))
}

/// Eager KL value without a tape.
pub fn kl_value<S: Scalar>(teacher_probs: &Matrix<S>, student_logits: &Matrix<S>) -> Result<S> {
    let mut tape = Tape::new();
    let l = tape.constant(student_logits.clone())?;
    let loss = kl_divergence(&mut tape, teacher_probs, l)?;
    Ok(tape.scalar_value(loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    #[test]
    fn uniform_softmax_gives_ln_k() {
        let logits = M::zeros(3, 2);
        let v = cross_entropy_value(&logits, &[0, 1, 0]).unwrap();
        assert!((v - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_stay_finite() {
        let logits = M::from_rows(&[vec![1000.0, 0.0]]);
        let v = cross_entropy_value(&logits, &[0]).unwrap();
        assert!(v.is_finite());
        assert!(v.abs() < 1e-9);
        // The other target is the mathematically huge but finite branch.
        let v = cross_entropy_value(&logits, &[1]).unwrap();
        assert!((v - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_matches_direct_evaluation() {
        // -log(e^3 / (e^1 + e^2 + e^3))
        let logits = M::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let expected = -(3f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp())).ln();
        let v = cross_entropy_value(&logits, &[2]).unwrap();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_class_names_the_row() {
        let logits = M::zeros(2, 2);
        let err = cross_entropy_value(&logits, &[0, 5]).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
    }

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let logits = M::from_rows(&[vec![0.3, -1.2, 0.7], vec![2.0, 2.0, 2.0]]);
        let teacher = logits.softmax_rows();
        let v = kl_value(&teacher, &logits).unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn deterministic_teacher_vs_uniform_student_is_ln2() {
        let teacher = M::from_rows(&[vec![1.0, 0.0]]);
        let logits = M::zeros(1, 2);
        let v = kl_value(&teacher, &logits).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_matches_direct_evaluation() {
        // teacher (0.7, 0.3) vs uniform student: 0.7 ln 1.4 + 0.3 ln 0.6
        let teacher = M::from_rows(&[vec![0.7, 0.3]]);
        let logits = M::zeros(1, 2);
        let expected = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
        let v = kl_value(&teacher, &logits).unwrap();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_simplex_names_the_row() {
        let teacher = M::from_rows(&[vec![0.5, 0.5], vec![0.9, 0.4]]);
        let logits = M::zeros(2, 2);
        let err = kl_value(&teacher, &logits).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
    }

    #[test]
    fn kl_gradient_flows_to_student_only() {
        let mut tape = Tape::new();
        let logits = tape.input(M::from_rows(&[vec![0.2, -0.4]])).unwrap();
        let teacher = M::from_rows(&[vec![0.9, 0.1]]);
        let loss = kl_divergence(&mut tape, &teacher, logits).unwrap();
        let g = tape.grad(loss, &[logits]).unwrap();
        // d/dlogit of KL = softmax(logits) - teacher
        let p = M::from_rows(&[vec![0.2, -0.4]]).softmax_rows();
        assert!((g[0].get(0, 0) - (p.get(0, 0) - 0.9)).abs() < 1e-12);
        assert!((g[0].get(0, 1) - (p.get(0, 1) - 0.1)).abs() < 1e-12);
    }
}
