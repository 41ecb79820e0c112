//! Reverse-mode differentiation over a single-use operation tape.
//!
//! Values are computed eagerly as operations are recorded, so the tape is a
//! DAG in topological order by construction and shape errors surface at
//! construction time. A tape is built per training step and discarded.

use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<S: Scalar> {
    Input,
    MatMul(NodeId, NodeId),
    /// `a * b^T`
    MatMulTransposeB(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    Scale(NodeId, S),
    /// `a (m x n) + b (1 x n)` broadcast over rows.
    AddRowBroadcast(NodeId, NodeId),
    Relu(NodeId),
    Log(NodeId),
    Exp(NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    ConcatCols(NodeId, NodeId),
    Sum(NodeId),
    FrobeniusSq(NodeId),
    /// Gathers `a[i, idx[i]]` into a column vector.
    SelectPerRow(NodeId, Vec<usize>),
    GatherRows(NodeId, Vec<usize>),
    /// GCN-style mean over `{v} ∪ N(v)`; linear in its input.
    NeighborMean(NodeId, Arc<Csr>),
}

struct Node<S: Scalar> {
    op: Op<S>,
    value: Matrix<S>,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<S> {
        &self.nodes[id.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar_value(&self, id: NodeId) -> S {
        debug_assert_eq!(self.value(id).shape(), (1, 1));
        self.value(id).get(0, 0)
    }

    fn push(&mut self, op: Op<S>, value: Matrix<S>, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: format!("tape op {name}"),
            });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        Ok(id)
    }

    /// Leaf node whose gradient may be requested.
    pub fn input(&mut self, value: Matrix<S>) -> Result<NodeId> {
        self.push(Op::Input, value, "input")
    }

    /// Leaf node treated as data; identical to [`Tape::input`] except in intent.
    pub fn constant(&mut self, value: Matrix<S>) -> Result<NodeId> {
        self.push(Op::Input, value, "constant")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v, "matmul")
    }

    pub fn matmul_transpose_b(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_transpose_b(self.value(b))?;
        self.push(Op::MatMulTransposeB(a, b), v, "matmul_transpose_b")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        self.push(Op::Add(a, b), v, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(Op::Sub(a, b), v, "sub")
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul_elem(self.value(b))?;
        self.push(Op::MulElem(a, b), v, "mul_elem")
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> Result<NodeId> {
        let v = self.value(a).scale(c);
        self.push(Op::Scale(a, c), v, "scale")
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add_row_broadcast(self.value(b))?;
        self.push(Op::AddRowBroadcast(a, b), v, "add_row_broadcast")
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.max(S::zero()));
        self.push(Op::Relu(a), v, "relu")
    }

    /// Natural log; requires strictly positive entries.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).data().iter().any(|&x| x <= S::zero()) {
            return Err(Error::InvalidArgument {
                op: "log",
                msg: "non-positive entry".into(),
            });
        }
        let v = self.value(a).map(|x| x.ln());
        self.push(Op::Log(a), v, "log")
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.exp());
        self.push(Op::Exp(a), v, "exp")
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).softmax_rows();
        self.push(Op::SoftmaxRows(a), v, "softmax_rows")
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).log_softmax_rows();
        self.push(Op::LogSoftmaxRows(a), v, "log_softmax_rows")
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).concat_cols(self.value(b))?;
        self.push(Op::ConcatCols(a, b), v, "concat_cols")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Matrix::new(1, 1, vec![self.value(a).sum()])?;
        self.push(Op::Sum(a), v, "sum")
    }

    pub fn frobenius_sq(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Matrix::new(1, 1, vec![self.value(a).frobenius_sq()])?;
        self.push(Op::FrobeniusSq(a), v, "frobenius_sq")
    }

    pub fn select_per_row(&mut self, a: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        let m = self.value(a);
        if indices.len() != m.rows() {
            return Err(Error::InvalidArgument {
                op: "select_per_row",
                msg: format!("{} indices for {} rows", indices.len(), m.rows()),
            });
        }
        let mut data = Vec::with_capacity(m.rows());
        for (i, &j) in indices.iter().enumerate() {
            if j >= m.cols() {
                return Err(Error::InvalidArgument {
                    op: "select_per_row",
                    msg: format!("row {i}: column index {j} out of range [0, {})", m.cols()),
                });
            }
            data.push(m.get(i, j));
        }
        let v = Matrix::new(m.rows(), 1, data)?;
        self.push(Op::SelectPerRow(a, indices), v, "select_per_row")
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        let v = self.value(a).gather_rows(&rows)?;
        self.push(Op::GatherRows(a, rows), v, "gather_rows")
    }

    pub fn neighbor_mean(&mut self, a: NodeId, adj: &Arc<Csr>) -> Result<NodeId> {
        let v = adj.mean_with_self(self.value(a))?;
        self.push(Op::NeighborMean(a, Arc::clone(adj)), v, "neighbor_mean")
    }

    /// `∂output/∂leaf` for each requested leaf, in order. `output` must be
    /// scalar-shaped (`1 x 1`). A leaf the output does not depend on gets a
    /// zero gradient of its own shape.
    pub fn grad(&self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Matrix<S>>> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::InvalidArgument {
                op: "grad",
                msg: format!(
                    "output must be scalar-shaped, got {:?}",
                    self.value(output).shape()
                ),
            });
        }
        let mut grads: Vec<Option<Matrix<S>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::filled(1, 1, S::one()));

        for i in (0..=output.0).rev() {
            // operands always precede i, so taking and restoring never aliases
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_transpose_b(self.value(*b))?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::MatMulTransposeB(a, b) => {
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.transpose().matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-S::one()))?;
                    accumulate(&mut grads, *a, g.clone())?;
                }
                Op::MulElem(a, b) => {
                    let ga = g.mul_elem(self.value(*b))?;
                    let gb = g.mul_elem(self.value(*a))?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, g.scale(*c))?;
                }
                Op::AddRowBroadcast(a, b) => {
                    let mut col_sums = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, &v) in col_sums.row_mut(0).iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, col_sums)?;
                }
                Op::Relu(a) => {
                    let mask = self.value(*a).map(|x| if x > S::zero() { S::one() } else { S::zero() });
                    accumulate(&mut grads, *a, g.mul_elem(&mask)?)?;
                }
                Op::Log(a) => {
                    let inv = self.value(*a).map(|x| S::one() / x);
                    accumulate(&mut grads, *a, g.mul_elem(&inv)?)?;
                }
                Op::Exp(a) => {
                    accumulate(&mut grads, *a, g.mul_elem(&self.nodes[i].value)?)?;
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: S = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                        for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let gr = g.row(r);
                        let gsum: S = gr.iter().copied().sum();
                        for ((o, &yv), &gv) in
                            ga.row_mut(r).iter_mut().zip(y.row(r)).zip(gr)
                        {
                            *o = gv - yv.exp() * gsum;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    let mut gb = Matrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(shape.0, shape.1, g.get(0, 0)))?;
                }
                Op::FrobeniusSq(a) => {
                    let two_g = g.get(0, 0) * (S::one() + S::one());
                    accumulate(&mut grads, *a, self.value(*a).scale(two_g))?;
                }
                Op::SelectPerRow(a, indices) => {
                    let mut ga = Matrix::zeros(self.value(*a).rows(), self.value(*a).cols());
                    for (r, &j) in indices.iter().enumerate() {
                        let prev = ga.get(r, j);
                        ga.set(r, j, prev + g.get(r, 0));
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::GatherRows(a, rows) => {
                    let mut ga = Matrix::zeros(self.value(*a).rows(), self.value(*a).cols());
                    for (r, &src) in rows.iter().enumerate() {
                        for (o, &v) in ga.row_mut(src).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::NeighborMean(a, adj) => {
                    accumulate(&mut grads, *a, adj.mean_with_self_adjoint(&g)?)?;
                }
            }
            grads[i] = Some(g);
        }

        Ok(wrt
            .iter()
            .map(|id| {
                grads[id.0].take().unwrap_or_else(|| {
                    let (r, c) = self.value(*id).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect())
    }
}

fn accumulate<S: Scalar>(
    grads: &mut [Option<Matrix<S>>],
    id: NodeId,
    delta: Matrix<S>,
) -> Result<()> {
    match &mut grads[id.0] {
        Some(existing) => {
            *existing = existing.add(&delta)?;
        }
        slot @ None => *slot = Some(delta),
    }
    Ok(())
}
