//! Dense row-major matrices.
//!
//! Features, weights and hidden states are small at this scale, so a flat
//! `Vec` with explicit loops is enough; adjacency stays sparse and lives in
//! [`crate::graph`].

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<S: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument {
                op: "Matrix::new",
                msg: format!(
                    "data length {} does not match {}x{}",
                    data.len(),
                    rows,
                    cols
                ),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: S) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    /// Builds from nested rows; panics on ragged input (test convenience).
    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn require_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "add")?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "sub")?;
        Ok(self.zip(other, |a, b| a - b))
    }

    pub fn mul_elem(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "mul_elem")?;
        Ok(self.zip(other, |a, b| a * b))
    }

    fn zip(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, c: S) -> Self {
        self.map(|v| v * c)
    }

    /// `self + b` with `b` a `1 x cols` row broadcast over every row.
    pub fn add_row_broadcast(&self, b: &Self) -> Result<Self> {
        if b.rows != 1 || b.cols != self.cols {
            return Err(Error::ShapeMismatch {
                op: "add_row_broadcast",
                lhs: self.shape(),
                rhs: b.shape(),
            });
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (o, &bv) in out.row_mut(i).iter_mut().zip(&b.data) {
                *o += bv;
            }
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, n) = (self.rows, other.cols);
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let a_row = self.row(i);
            let out_row = &mut out[i * n..(i + 1) * n];
            // k-major accumulation: each out entry sums over k in ascending
            // order, matching the textbook triple loop bit for bit.
            for (k, &aik) in a_row.iter().enumerate() {
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bkj;
                }
            }
        }
        Ok(Self { rows: m, cols: n, data: out })
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_transpose_b(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_transpose_b",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (m, n) = (self.rows, other.rows);
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let a_row = self.row(i);
            for j in 0..n {
                let b_row = other.row(j);
                let mut acc = S::zero();
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out[i * n + j] = acc;
            }
        }
        Ok(Self { rows: m, cols: n, data: out })
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn concat_cols(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Self { rows: self.rows, cols, data })
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::InvalidArgument {
                    op: "gather_rows",
                    msg: format!("row {i} out of range for {} rows", self.rows),
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self { rows: indices.len(), cols: self.cols, data })
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn frobenius_sq(&self) -> S {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Row-wise softmax with max-subtraction, stable for large logits.
    pub fn softmax_rows(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        out
    }

    /// Row-wise `x - logsumexp(x)`, stable for large logits.
    pub fn log_softmax_rows(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut sum = S::zero();
            for &v in row.iter() {
                sum += (v - max).exp();
            }
            let lse = max + sum.ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        out
    }

    /// Per-row argmax; ties break toward the smallest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    #[test]
    fn identity_matmul_preserves() {
        let m = M::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let i = M::identity(2);
        assert_eq!(i.matmul(&m).unwrap(), m);
        assert_eq!(m.matmul(&i).unwrap(), m);
    }

    #[test]
    fn hand_matmul() {
        let a = M::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = M::from_rows(&[vec![0.0], vec![1.0]]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c, M::from_rows(&[vec![2.0], vec![4.0]]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = M::zeros(2, 3);
        let b = M::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn softmax_rows_sum_to_one_for_large_logits() {
        let m = M::from_rows(&[vec![1000.0, 0.0, -1000.0], vec![-1e3, 1e3, 0.0]]);
        let s = m.softmax_rows();
        for i in 0..2 {
            let sum: f64 = s.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        assert!(s.is_finite());
    }

    #[test]
    fn argmax_tie_breaks_low() {
        let m = M::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.9]]);
        assert_eq!(m.argmax_rows(), vec![0, 1]);
    }

    #[test]
    fn concat_cols_layout() {
        let a = M::from_rows(&[vec![1.0, 2.0]]);
        let b = M::from_rows(&[vec![3.0]]);
        let c = a.concat_cols(&b).unwrap();
        assert_eq!(c.row(0), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn works_for_f32_too() {
        let a: Matrix<f32> = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let s = a.softmax_rows();
        assert!((s.row(0).iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
