//! GraphSAGE teacher with GCN-style mean aggregation.
//!
//! Each layer averages `{v} ∪ N(v)` (the mean replaces the self-loops that
//! ingestion drops) and applies an affine map; ReLU between layers, none
//! after the last. Trained full-batch on the labeled nodes of the training
//! view, with the epoch snapshot that scores best on the observed-unlabeled
//! nodes kept as the final model.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{init_dense, DenseLayer};
use crate::loss::softmax_cross_entropy;
use crate::matrix::Matrix;
use crate::optim::Adam;
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;
use crate::split::SplitAssignment;
use crate::tape::Tape;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const TEACHER_MAGIC: &[u8; 4] = b"GDTM";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            num_layers: 2,
            learning_rate: 0.01,
            epochs: 200,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::InvalidArgument {
                op: "TeacherConfig",
                msg: "teacher.hidden_dim must be positive".into(),
            });
        }
        if self.num_layers == 0 {
            return Err(Error::InvalidArgument {
                op: "TeacherConfig",
                msg: "teacher.num_layers must be positive".into(),
            });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument {
                op: "TeacherConfig",
                msg: format!("teacher.learning_rate must be positive, got {}", self.learning_rate),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel<S: Scalar> {
    pub layers: Vec<DenseLayer<S>>,
}

impl<S: Scalar> TeacherModel<S> {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    /// Width of the exported hidden representation: the output of the layer
    /// feeding the classifier, or the input width for single-layer models.
    pub fn hidden_dim(&self) -> usize {
        if self.layers.len() >= 2 {
            self.layers[self.layers.len() - 2].out_dim()
        } else {
            self.in_dim()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }

    /// Full-graph forward pass. Returns the last hidden activations (the
    /// classifier input, before aggregation) and the logits.
    pub fn forward(&self, graph: &Graph<S>) -> Result<(Matrix<S>, Matrix<S>)> {
        let mut h = graph.content().clone();
        let mut hidden = h.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l == self.layers.len() - 1 {
                hidden = h.clone();
            }
            let m = graph.adjacency().mean_with_self(&h)?;
            let z = m.matmul(&layer.weight)?.add_row_broadcast(&layer.bias)?;
            h = if l + 1 < self.layers.len() {
                z.map(|x| x.max(S::zero()))
            } else {
                z
            };
        }
        Ok((hidden, h))
    }

    pub fn predict(&self, graph: &Graph<S>) -> Result<Vec<usize>> {
        Ok(self.forward(graph)?.1.argmax_rows())
    }
}

/// One GraphSAGE layer: mean over `{v} ∪ N(v)`, then `m · weight + bias`.
pub fn sage_layer_forward<S: Scalar>(
    h_in: &Matrix<S>,
    graph: &Graph<S>,
    weight: &Matrix<S>,
    bias: &Matrix<S>,
) -> Result<Matrix<S>> {
    let m = graph.adjacency().mean_with_self(h_in)?;
    m.matmul(weight)?.add_row_broadcast(bias)
}

/// Seeded initialization; `train_teacher` with zero epochs returns exactly this.
pub fn init_teacher<S: Scalar>(
    config: &TeacherConfig,
    in_dim: usize,
    num_classes: usize,
    seed: u64,
) -> TeacherModel<S> {
    let mut rng = rng_from_seed(seed);
    let mut layers = Vec::with_capacity(config.num_layers);
    let mut d_in = in_dim;
    for l in 0..config.num_layers {
        let d_out = if l + 1 < config.num_layers {
            config.hidden_dim
        } else {
            num_classes
        };
        layers.push(init_dense(&mut rng, d_in, d_out));
        d_in = d_out;
    }
    TeacherModel { layers }
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub best_epoch: Option<usize>,
}

pub fn train_teacher<S: Scalar>(
    view: &Graph<S>,
    split: &SplitAssignment,
    config: &TeacherConfig,
    seed: u64,
) -> Result<(TeacherModel<S>, TrainLog)> {
    config.validate()?;
    if split.num_nodes() != view.num_nodes() {
        return Err(Error::InvalidArgument {
            op: "train_teacher",
            msg: format!(
                "split covers {} nodes, view has {}",
                split.num_nodes(),
                view.num_nodes()
            ),
        });
    }
    let labeled = split.labeled();
    if labeled.is_empty() {
        return Err(Error::InvalidArgument {
            op: "train_teacher",
            msg: "labeled set is empty".into(),
        });
    }
    let observed = split.observed();
    let targets: Vec<usize> = labeled.iter().map(|&v| view.label(v)).collect();

    let mut model = init_teacher::<S>(config, view.content().cols(), view.num_classes(), seed);
    let shapes: Vec<(usize, usize)> = model
        .layers
        .iter()
        .flat_map(|l| [l.weight.shape(), l.bias.shape()])
        .collect();
    let mut adam = Adam::<S>::new(config.learning_rate, &shapes);

    let mut log = TrainLog::default();
    let mut best: Option<(f64, TeacherModel<S>, usize)> = None;

    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let mut param_ids = Vec::with_capacity(shapes.len());
        for layer in &model.layers {
            param_ids.push(tape.input(layer.weight.clone()).map_err(divergence(epoch, config))?);
            param_ids.push(tape.input(layer.bias.clone()).map_err(divergence(epoch, config))?);
        }
        let x = tape.constant(view.content().clone()).map_err(divergence(epoch, config))?;
        let mut h = x;
        for l in 0..model.layers.len() {
            let m = tape.neighbor_mean(h, view.adjacency()).map_err(divergence(epoch, config))?;
            let z = tape.matmul(m, param_ids[2 * l]).map_err(divergence(epoch, config))?;
            let z = tape
                .add_row_broadcast(z, param_ids[2 * l + 1])
                .map_err(divergence(epoch, config))?;
            h = if l + 1 < model.layers.len() {
                tape.relu(z).map_err(divergence(epoch, config))?
            } else {
                z
            };
        }
        let labeled_logits = tape.gather_rows(h, labeled.clone()).map_err(divergence(epoch, config))?;
        let loss = softmax_cross_entropy(&mut tape, labeled_logits, &targets)
            .map_err(divergence(epoch, config))?;
        let loss_value = tape.scalar_value(loss).to_f64().unwrap_or(f64::NAN);
        if !loss_value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                learning_rate: config.learning_rate,
                msg: format!("loss = {loss_value}"),
            });
        }
        log.train_loss.push(loss_value);

        let grads = tape.grad(loss, &param_ids).map_err(divergence(epoch, config))?;
        let mut params: Vec<Matrix<S>> = model
            .layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect();
        adam.step(&mut params, &grads);
        for (l, chunk) in params.chunks_exact(2).enumerate() {
            model.layers[l].weight = chunk[0].clone();
            model.layers[l].bias = chunk[1].clone();
        }
        if !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                learning_rate: config.learning_rate,
                msg: "parameters became non-finite".into(),
            });
        }

        // validation-based selection; with no observed nodes the final model wins
        if !observed.is_empty() {
            let preds = model.predict(view)?;
            let hits = observed.iter().filter(|&&v| preds[v] == view.label(v)).count();
            let val_acc = hits as f64 / observed.len() as f64;
            log.val_accuracy.push(val_acc);
            if best.as_ref().map_or(true, |(acc, _, _)| val_acc > *acc) {
                best = Some((val_acc, model.clone(), epoch));
            }
        }
    }

    if let Some((_, best_model, best_epoch)) = best {
        log.best_epoch = Some(best_epoch);
        Ok((best_model, log))
    } else {
        // zero-epoch runs return the seeded initialization
        Ok((model, log))
    }
}

fn divergence<'a>(epoch: usize, config: &'a TeacherConfig) -> impl Fn(Error) -> Error + 'a {
    move |e| match e {
        Error::NonFinite { what } => Error::Divergence {
            epoch,
            learning_rate: config.learning_rate,
            msg: format!("{what} became non-finite"),
        },
        other => other,
    }
}

/// Teacher soft labels and hidden rows for a node set, in ascending node order.
#[derive(Debug, Clone)]
pub struct TeacherOutputs<S: Scalar> {
    node_ids: Vec<usize>,
    soft_labels: Matrix<S>,
    hidden: Matrix<S>,
}

impl<S: Scalar> TeacherOutputs<S> {
    pub fn node_ids(&self) -> &[usize] {
        &self.node_ids
    }

    pub fn soft_labels(&self) -> &Matrix<S> {
        &self.soft_labels
    }

    pub fn hidden(&self) -> &Matrix<S> {
        &self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        let tol = S::from_f64_lossy(1e-6);
        for i in 0..self.soft_labels.rows() {
            let sum: S = self.soft_labels.row(i).iter().copied().sum();
            if (sum - S::one()).abs() > tol {
                return Err(Error::InvalidArgument {
                    op: "TeacherOutputs",
                    msg: format!("soft-label row {i} sums to {sum}"),
                });
            }
        }
        if self.hidden.rows() != self.node_ids.len() {
            return Err(Error::InvalidArgument {
                op: "TeacherOutputs",
                msg: "hidden row count does not match node set".into(),
            });
        }
        Ok(())
    }
}

/// Inference-only export of soft labels and hidden representations for
/// `node_set` (ids into `graph`, need not be sorted).
pub fn export_teacher_outputs<S: Scalar>(
    model: &TeacherModel<S>,
    graph: &Graph<S>,
    node_set: &[usize],
) -> Result<TeacherOutputs<S>> {
    let mut ids = node_set.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if let Some(&bad) = ids.iter().find(|&&v| v >= graph.num_nodes()) {
        return Err(Error::InvalidArgument {
            op: "export_teacher_outputs",
            msg: format!("node {bad} outside graph with {} nodes", graph.num_nodes()),
        });
    }
    let (hidden_all, logits_all) = model.forward(graph)?;
    let soft = logits_all.gather_rows(&ids)?.softmax_rows();
    let hidden = hidden_all.gather_rows(&ids)?;
    let out = TeacherOutputs {
        node_ids: ids,
        soft_labels: soft,
        hidden,
    };
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherMeta {
    pub config: TeacherConfig,
    pub seed: u64,
    pub in_dim: usize,
    pub num_classes: usize,
}

pub fn save_teacher<S: Scalar>(model: &TeacherModel<S>, path: &Path) -> Result<()> {
    let mats: Vec<&Matrix<S>> = model
        .layers
        .iter()
        .flat_map(|l| [&l.weight, &l.bias])
        .collect();
    crate::checkpoint::write_checkpoint(path, TEACHER_MAGIC, &mats)
}

pub fn load_teacher<S: Scalar>(path: &Path) -> Result<TeacherModel<S>> {
    let mats = crate::checkpoint::read_checkpoint::<S>(path, TEACHER_MAGIC)?;
    if mats.is_empty() || mats.len() % 2 != 0 {
        return Err(Error::Checkpoint(format!(
            "{}: expected weight/bias pairs, found {} matrices",
            path.display(),
            mats.len()
        )));
    }
    let layers: Vec<DenseLayer<S>> = mats
        .chunks_exact(2)
        .map(|c| DenseLayer {
            weight: c[0].clone(),
            bias: c[1].clone(),
        })
        .collect();
    for l in &layers {
        if l.bias.rows() != 1 || l.bias.cols() != l.weight.cols() {
            return Err(Error::Checkpoint(format!(
                "{}: bias shape {:?} does not match weight {:?}",
                path.display(),
                l.bias.shape(),
                l.weight.shape()
            )));
        }
    }
    Ok(TeacherModel { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::{Role, SplitAssignment};

    fn graph(n: usize, edges: &[(u32, u32)], content: Matrix<f64>, labels: Vec<u32>, k: usize) -> Graph<f64> {
        Graph::new(n, edges, content, labels, k).unwrap()
    }

    #[test]
    fn isolated_node_aggregates_itself() {
        let g = graph(2, &[], Matrix::from_rows(&[vec![2.0, -1.0], vec![0.5, 3.0]]), vec![0, 0], 1);
        let w = Matrix::identity(2);
        let b = Matrix::zeros(1, 2);
        let out = sage_layer_forward(g.content(), &g, &w, &b).unwrap();
        assert_eq!(out, *g.content());
    }

    #[test]
    fn constant_field_is_fixed_point_of_mean() {
        // star: center 0, leaves 1..=4, all holding the same vector
        let edges: Vec<(u32, u32)> = (1..=4).map(|v| (0u32, v as u32)).collect();
        let x = Matrix::from_rows(&(0..5).map(|_| vec![1.5, -0.5]).collect::<Vec<_>>());
        let g = graph(5, &edges, x.clone(), vec![0; 5], 1);
        let out = sage_layer_forward(&x, &g, &Matrix::identity(2), &Matrix::zeros(1, 2)).unwrap();
        for v in 0..5 {
            for (a, b) in out.row(v).iter().zip(x.row(v)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn triangle_of_basis_vectors_averages_to_thirds() {
        let g = graph(
            3,
            &[(0, 1), (1, 2), (0, 2)],
            Matrix::identity(3),
            vec![0, 0, 0],
            1,
        );
        let out = sage_layer_forward(g.content(), &g, &Matrix::identity(3), &Matrix::zeros(1, 3))
            .unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!((out.get(r, c) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    fn clique_pair_dataset() -> (Graph<f64>, SplitAssignment) {
        // two disjoint 5-cliques, one-hot node-id features, one label each
        let size = 5;
        let n = 2 * size;
        let mut edges = Vec::new();
        for base in [0, size] {
            for a in 0..size {
                for b in (a + 1)..size {
                    edges.push(((base + a) as u32, (base + b) as u32));
                }
            }
        }
        let content = Matrix::identity(n);
        let labels: Vec<u32> = (0..n).map(|v| (v / size) as u32).collect();
        let g = graph(n, &edges, content, labels, 2);
        let mut roles = vec![Role::ObservedUnlabeled; n];
        roles[0] = Role::Labeled;
        roles[size] = Role::Labeled;
        (g, SplitAssignment::from_roles(roles))
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let (g, split) = clique_pair_dataset();
        let config = TeacherConfig {
            hidden_dim: 16,
            num_layers: 2,
            learning_rate: 0.05,
            epochs: 120,
        };
        let (model, _) = train_teacher(&g, &split, &config, 0).unwrap();
        let preds = model.predict(&g).unwrap();
        for v in 0..g.num_nodes() {
            assert_eq!(preds[v], g.label(v), "node {v}");
        }
    }

    #[test]
    fn zero_epochs_returns_seeded_initialization() {
        let (g, split) = clique_pair_dataset();
        let config = TeacherConfig { epochs: 0, ..TeacherConfig::default() };
        let (model, log) = train_teacher(&g, &split, &config, 7).unwrap();
        let init = init_teacher::<f64>(&config, g.content().cols(), 2, 7);
        assert_eq!(model, init);
        assert!(log.val_accuracy.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_trajectories() {
        let (g, split) = clique_pair_dataset();
        let config = TeacherConfig {
            hidden_dim: 8,
            num_layers: 2,
            learning_rate: 0.02,
            epochs: 30,
        };
        let (_, log_a) = train_teacher(&g, &split, &config, 3).unwrap();
        let (_, log_b) = train_teacher(&g, &split, &config, 3).unwrap();
        assert_eq!(log_a.val_accuracy, log_b.val_accuracy);
        assert_eq!(log_a.train_loss, log_b.train_loss);
    }

    #[test]
    fn training_loss_is_non_increasing_at_small_lr() {
        let (g, split) = clique_pair_dataset();
        let config = TeacherConfig {
            hidden_dim: 8,
            num_layers: 2,
            learning_rate: 1e-3,
            epochs: 50,
        };
        let (_, log) = train_teacher(&g, &split, &config, 1).unwrap();
        for w in log.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "loss rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn exported_rows_lie_on_the_simplex() {
        let (g, split) = clique_pair_dataset();
        let config = TeacherConfig { epochs: 10, ..TeacherConfig::default() };
        let (model, _) = train_teacher(&g, &split, &config, 2).unwrap();
        let all: Vec<usize> = (0..g.num_nodes()).collect();
        let out = export_teacher_outputs(&model, &g, &all).unwrap();
        assert_eq!(out.soft_labels().rows(), g.num_nodes());
        out.validate().unwrap();
        assert_eq!(out.hidden().rows(), g.num_nodes());
        assert_eq!(out.hidden().cols(), model.hidden_dim());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (g, split) = clique_pair_dataset();
        let config = TeacherConfig { epochs: 5, ..TeacherConfig::default() };
        let (model, _) = train_teacher(&g, &split, &config, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("teacher.ckpt");
        save_teacher(&model, &path).unwrap();
        let loaded = load_teacher::<f64>(&path).unwrap();
        assert_eq!(loaded, model);
        // magic bytes are the first four bytes on disk
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"GDTM");
    }
}
