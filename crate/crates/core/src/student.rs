//! The distilled student: an MLP over concatenated content and position
//! features, trained with a four-term objective — ground-truth cross-entropy,
//! soft-label KL, representational-similarity matching on batch Gram
//! matrices, and adversarial augmentation of the content features.

use crate::error::{Error, Result};
use crate::layers::{init_dense, init_square, DenseLayer};
use crate::loss::{kl_divergence, softmax_cross_entropy, validate_simplex_rows};
use crate::matrix::Matrix;
use crate::optim::Adam;
use crate::positions::PositionTable;
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;
use crate::split::Role;
use crate::tape::{NodeId, Tape};
use crate::teacher::TrainLog;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const STUDENT_MAGIC: &[u8; 4] = b"GDSM";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillConfig {
    /// Soft-label weight (λ).
    pub lambda: f64,
    /// Representation-similarity weight (μ).
    pub mu: f64,
    /// Adversarial weight (η).
    pub eta: f64,
    /// ℓ∞ radius of the perturbation ball.
    pub epsilon: f64,
    /// Per-step magnitude of the sign update.
    pub step_size: f64,
    /// Attack iterations T.
    pub pgd_steps: usize,
    /// Mini-batch size shared by the similarity and adversarial terms.
    pub rsd_batch: usize,
    pub hidden_dim: usize,
    pub num_hidden_layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu: 0.1,
            eta: 0.1,
            epsilon: 0.05,
            step_size: 0.01,
            pgd_steps: 5,
            rsd_batch: 256,
            hidden_dim: 128,
            num_hidden_layers: 2,
            learning_rate: 0.01,
            epochs: 300,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::InvalidArgument { op: "DistillConfig", msg };
        for (name, v) in [("distill.lambda", self.lambda), ("distill.mu", self.mu), ("distill.eta", self.eta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(format!("{name} must be a finite non-negative weight, got {v}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(bad(format!("distill.epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(bad(format!("distill.step_size must be positive, got {}", self.step_size)));
        }
        if self.step_size > self.epsilon {
            return Err(bad(format!(
                "distill.step_size ({}) must not exceed distill.epsilon ({})",
                self.step_size, self.epsilon
            )));
        }
        if self.pgd_steps == 0 {
            return Err(bad("distill.pgd_steps must be at least 1".into()));
        }
        if self.rsd_batch == 0 {
            return Err(bad("distill.rsd_batch must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(bad(format!(
                "distill.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel<S: Scalar> {
    /// Hidden layers followed by the classifier.
    pub layers: Vec<DenseLayer<S>>,
    /// Square transform applied to hidden representations before the Gram
    /// comparison (W_M, d_M x d_M).
    pub rsd_transform: Matrix<S>,
    pub content_dim: usize,
    pub position_dim: usize,
}

impl<S: Scalar> StudentModel<S> {
    pub fn input_dim(&self) -> usize {
        self.content_dim + self.position_dim
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    /// Width of the pre-classifier activations (the input width when there
    /// are no hidden layers).
    pub fn hidden_dim(&self) -> usize {
        if self.layers.len() >= 2 {
            self.layers[self.layers.len() - 2].out_dim()
        } else {
            self.input_dim()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite) && self.rsd_transform.is_finite()
    }

    fn params(&self) -> Vec<Matrix<S>> {
        let mut p: Vec<Matrix<S>> = self
            .layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect();
        p.push(self.rsd_transform.clone());
        p
    }

    fn set_params(&mut self, params: &[Matrix<S>]) {
        let n = self.layers.len();
        for (l, chunk) in params[..2 * n].chunks_exact(2).enumerate() {
            self.layers[l].weight = chunk[0].clone();
            self.layers[l].bias = chunk[1].clone();
        }
        self.rsd_transform = params[2 * n].clone();
    }
}

/// Column-wise concatenation, content first. A zero-dimension table is the
/// "no position features" ablation and returns the content unchanged.
pub fn concat_features<S: Scalar>(
    content: &Matrix<S>,
    positions: &PositionTable<S>,
) -> Result<Matrix<S>> {
    if content.rows() != positions.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "concat_features",
            lhs: content.shape(),
            rhs: (positions.num_nodes(), positions.dim()),
        });
    }
    content.concat_cols(positions.embeddings())
}

/// Forward pass; returns the pre-classifier activations and the logits.
pub fn student_forward<S: Scalar>(
    model: &StudentModel<S>,
    x: &Matrix<S>,
) -> Result<(Matrix<S>, Matrix<S>)> {
    if x.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "student_forward",
            lhs: x.shape(),
            rhs: (x.rows(), model.input_dim()),
        });
    }
    let mut h = x.clone();
    let mut hidden = h.clone();
    for (l, layer) in model.layers.iter().enumerate() {
        if l == model.layers.len() - 1 {
            hidden = h.clone();
        }
        let z = h.matmul(&layer.weight)?.add_row_broadcast(&layer.bias)?;
        h = if l + 1 < model.layers.len() {
            z.map(|v| v.max(S::zero()))
        } else {
            z
        };
    }
    Ok((hidden, h))
}

/// Argmax prediction per node; ties break toward the smallest class index.
pub fn student_predict<S: Scalar>(
    model: &StudentModel<S>,
    content: &Matrix<S>,
    positions: &PositionTable<S>,
) -> Result<Vec<usize>> {
    let x = concat_features(content, positions)?;
    Ok(student_forward(model, &x)?.1.argmax_rows())
}

/// Builds the MLP on a tape. `param_ids` holds `[W, b]` per layer in order.
fn forward_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    param_ids: &[NodeId],
    x: NodeId,
) -> Result<(NodeId, NodeId)> {
    let num_layers = param_ids.len() / 2;
    let mut h = x;
    let mut hidden = x;
    for l in 0..num_layers {
        if l == num_layers - 1 {
            hidden = h;
        }
        let z = tape.matmul(h, param_ids[2 * l])?;
        let z = tape.add_row_broadcast(z, param_ids[2 * l + 1])?;
        h = if l + 1 < num_layers { tape.relu(z)? } else { z };
    }
    Ok((hidden, h))
}

/// Squared Frobenius distance between the teacher and (transformed) student
/// batch Gram matrices, normalized by `B^2`. Gradients flow into `h_mlp`
/// and `w_m` only.
pub fn rsd_loss<S: Scalar>(h_gnn: &Matrix<S>, h_mlp: &Matrix<S>, w_m: &Matrix<S>) -> Result<S> {
    let mut tape = Tape::new();
    let h = tape.constant(h_mlp.clone())?;
    let w = tape.constant(w_m.clone())?;
    let node = rsd_loss_on_tape(&mut tape, h_gnn, h, w)?;
    Ok(tape.scalar_value(node))
}

fn rsd_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    h_gnn: &Matrix<S>,
    h_mlp: NodeId,
    w_m: NodeId,
) -> Result<NodeId> {
    let b = tape.value(h_mlp).rows();
    if b == 0 {
        return Err(Error::InvalidArgument {
            op: "rsd_loss",
            msg: "empty batch".into(),
        });
    }
    if h_gnn.rows() != b {
        return Err(Error::ShapeMismatch {
            op: "rsd_loss",
            lhs: h_gnn.shape(),
            rhs: tape.value(h_mlp).shape(),
        });
    }
    let d_m = tape.value(h_mlp).cols();
    if tape.value(w_m).shape() != (d_m, d_m) {
        return Err(Error::ShapeMismatch {
            op: "rsd_loss",
            lhs: tape.value(w_m).shape(),
            rhs: (d_m, d_m),
        });
    }
    let s_gnn = h_gnn.matmul_transpose_b(h_gnn)?;
    let transformed = tape.matmul(h_mlp, w_m)?;
    let activated = tape.relu(transformed)?;
    let s_mlp = tape.matmul_transpose_b(activated, activated)?;
    let s_gnn_const = tape.constant(s_gnn)?;
    let diff = tape.sub(s_gnn_const, s_mlp)?;
    let frob = tape.frobenius_sq(diff)?;
    tape.scale(frob, S::one() / S::from_f64_lossy((b * b) as f64))
}

/// The adversarial objective of the perturbed batch: mean cross-entropy on
/// its labeled rows (if any) plus mean soft-label cross-entropy on all rows.
fn adversarial_objective<S: Scalar>(
    tape: &mut Tape<S>,
    param_ids: &[NodeId],
    x: NodeId,
    labeled: &[(usize, usize)],
    soft: &Matrix<S>,
) -> Result<NodeId> {
    let (_, logits) = forward_on_tape(tape, param_ids, x)?;
    let rows = tape.value(logits).rows();
    if soft.rows() != rows {
        return Err(Error::ShapeMismatch {
            op: "adversarial_objective",
            lhs: soft.shape(),
            rhs: tape.value(logits).shape(),
        });
    }
    // soft-label cross-entropy: mean over rows of -sum_k z_k log softmax_k
    let logsm = tape.log_softmax_rows(logits)?;
    let z = tape.constant(soft.clone())?;
    let prod = tape.mul_elem(z, logsm)?;
    let total = tape.sum(prod)?;
    let soft_ce = tape.scale(total, -S::one() / S::from_f64_lossy(rows as f64))?;
    if labeled.is_empty() {
        return Ok(soft_ce);
    }
    let (rows_idx, targets): (Vec<usize>, Vec<usize>) = labeled.iter().copied().unzip();
    let picked = tape.gather_rows(logits, rows_idx)?;
    let ce = softmax_cross_entropy(tape, picked, &targets)?;
    tape.add(ce, soft_ce)
}

/// Splits a `B x (d_c + d_p)` batch into content and position columns.
fn split_columns<S: Scalar>(
    x_base: &Matrix<S>,
    content_dim: usize,
) -> Result<(Matrix<S>, Matrix<S>)> {
    if x_base.cols() < content_dim {
        return Err(Error::InvalidArgument {
            op: "pgd_perturb",
            msg: format!(
                "input has {} columns, fewer than content_dim {content_dim}",
                x_base.cols()
            ),
        });
    }
    let b = x_base.rows();
    let d_p = x_base.cols() - content_dim;
    let mut content = Matrix::zeros(b, content_dim);
    let mut positions = Matrix::zeros(b, d_p);
    for i in 0..b {
        content.row_mut(i).copy_from_slice(&x_base.row(i)[..content_dim]);
        positions.row_mut(i).copy_from_slice(&x_base.row(i)[content_dim..]);
    }
    Ok((content, positions))
}

/// Iterative sign-gradient ascent on the adversarial objective, projected
/// into the ℓ∞ ball of radius ε. Only content columns are perturbed; the
/// returned δ is `B x d_c`. Model parameters are read, never written.
pub fn pgd_perturb<S: Scalar>(
    model: &StudentModel<S>,
    x_base: &Matrix<S>,
    labeled: &[(usize, usize)],
    soft: &Matrix<S>,
    config: &DistillConfig,
) -> Result<Matrix<S>> {
    config.validate()?;
    validate_simplex_rows(soft, "pgd_perturb")?;
    if x_base.cols() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "pgd_perturb",
            lhs: x_base.shape(),
            rhs: (x_base.rows(), model.input_dim()),
        });
    }
    let (content, positions) = split_columns(x_base, model.content_dim)?;
    let eps = S::from_f64_lossy(config.epsilon);
    let step = S::from_f64_lossy(config.step_size);
    let mut delta = Matrix::<S>::zeros(x_base.rows(), model.content_dim);

    for t in 0..config.pgd_steps {
        let mut tape = Tape::new();
        let mut param_ids = Vec::new();
        for layer in &model.layers {
            param_ids.push(tape.constant(layer.weight.clone())?);
            param_ids.push(tape.constant(layer.bias.clone())?);
        }
        let content_const = tape.constant(content.clone())?;
        let delta_leaf = tape.input(delta.clone())?;
        let perturbed = tape.add(content_const, delta_leaf)?;
        let x = if model.position_dim > 0 {
            let pos_const = tape.constant(positions.clone())?;
            tape.concat_cols(perturbed, pos_const)?
        } else {
            perturbed
        };
        let objective = adversarial_objective(&mut tape, &param_ids, x, labeled, soft)?;
        let grad = tape.grad(objective, &[delta_leaf])?.remove(0);
        if !grad.is_finite() {
            return Err(Error::NonFinite {
                what: format!("pgd gradient at step {t}"),
            });
        }
        for (d, &g) in delta.data_mut().iter_mut().zip(grad.data()) {
            let moved = *d + step * g.signum0();
            *d = moved.max(-eps).min(eps);
        }
    }
    Ok(delta)
}

/// Value of the adversarial objective with `delta` applied to the content
/// columns and positions left untouched.
pub fn adversarial_loss<S: Scalar>(
    model: &StudentModel<S>,
    x_base: &Matrix<S>,
    delta: &Matrix<S>,
    labeled: &[(usize, usize)],
    soft: &Matrix<S>,
) -> Result<S> {
    validate_simplex_rows(soft, "adversarial_loss")?;
    let (content, positions) = split_columns(x_base, model.content_dim)?;
    if delta.shape() != content.shape() {
        return Err(Error::ShapeMismatch {
            op: "adversarial_loss",
            lhs: delta.shape(),
            rhs: content.shape(),
        });
    }
    let mut tape = Tape::new();
    let mut param_ids = Vec::new();
    for layer in &model.layers {
        param_ids.push(tape.constant(layer.weight.clone())?);
        param_ids.push(tape.constant(layer.bias.clone())?);
    }
    let content_const = tape.constant(content)?;
    let delta_const = tape.constant(delta.clone())?;
    let perturbed = tape.add(content_const, delta_const)?;
    let x = if model.position_dim > 0 {
        let pos_const = tape.constant(positions)?;
        tape.concat_cols(perturbed, pos_const)?
    } else {
        perturbed
    };
    let objective = adversarial_objective(&mut tape, &param_ids, x, labeled, soft)?;
    Ok(tape.scalar_value(objective))
}

/// `L_GT + λ L_SL + μ L_RSD + η L_ADV`.
pub fn total_loss<S: Scalar>(
    l_gt: S,
    l_sl: S,
    l_rsd: S,
    l_adv: S,
    config: &DistillConfig,
) -> Result<S> {
    for (name, v) in [("L_GT", l_gt), ("L_SL", l_sl), ("L_RSD", l_rsd), ("L_ADV", l_adv)] {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: name.into() });
        }
    }
    Ok(l_gt
        + S::from_f64_lossy(config.lambda) * l_sl
        + S::from_f64_lossy(config.mu) * l_rsd
        + S::from_f64_lossy(config.eta) * l_adv)
}

/// Everything the trainer reads. Rows are training-view nodes in view order;
/// teacher matrices must cover exactly those rows.
#[derive(Debug, Clone, Copy)]
pub struct StudentTrainData<'a, S: Scalar> {
    pub content: &'a Matrix<S>,
    pub positions: &'a Matrix<S>,
    pub labels: &'a [u32],
    pub roles: &'a [Role],
    pub teacher_soft: Option<&'a Matrix<S>>,
    pub teacher_hidden: Option<&'a Matrix<S>>,
    pub num_classes: usize,
}

impl<S: Scalar> StudentTrainData<'_, S> {
    fn check(&self, config: &DistillConfig) -> Result<()> {
        let n = self.content.rows();
        if self.positions.rows() != n || self.labels.len() != n || self.roles.len() != n {
            return Err(Error::InvalidArgument {
                op: "train_student",
                msg: "content, positions, labels and roles must cover the same rows".into(),
            });
        }
        if config.lambda > 0.0 || config.eta > 0.0 {
            let soft = self.teacher_soft.ok_or_else(|| Error::InvalidArgument {
                op: "train_student",
                msg: "teacher soft labels required when lambda or eta is positive".into(),
            })?;
            if soft.rows() != n {
                return Err(Error::InvalidArgument {
                    op: "train_student",
                    msg: format!("teacher soft labels cover {} rows, expected {n}", soft.rows()),
                });
            }
            validate_simplex_rows(soft, "train_student")?;
        }
        if config.mu > 0.0 {
            let hidden = self.teacher_hidden.ok_or_else(|| Error::InvalidArgument {
                op: "train_student",
                msg: "teacher hidden representations required when mu is positive".into(),
            })?;
            if hidden.rows() != n {
                return Err(Error::InvalidArgument {
                    op: "train_student",
                    msg: format!("teacher hidden covers {} rows, expected {n}", hidden.rows()),
                });
            }
        }
        Ok(())
    }
}

/// Seeded initialization: hidden layers, classifier, then the square
/// transform, drawn in that order from one stream.
pub fn init_student<S: Scalar>(
    config: &DistillConfig,
    content_dim: usize,
    position_dim: usize,
    num_classes: usize,
) -> StudentModel<S> {
    let mut rng = rng_from_seed(config.seed);
    init_student_with(&mut rng, config, content_dim, position_dim, num_classes)
}

fn init_student_with<S: Scalar>(
    rng: &mut rand_chacha::ChaCha8Rng,
    config: &DistillConfig,
    content_dim: usize,
    position_dim: usize,
    num_classes: usize,
) -> StudentModel<S> {
    let input_dim = content_dim + position_dim;
    let mut layers = Vec::with_capacity(config.num_hidden_layers + 1);
    let mut d_in = input_dim;
    for _ in 0..config.num_hidden_layers {
        layers.push(init_dense(rng, d_in, config.hidden_dim));
        d_in = config.hidden_dim;
    }
    layers.push(init_dense(rng, d_in, num_classes));
    let d_m = if config.num_hidden_layers > 0 { config.hidden_dim } else { input_dim };
    let rsd_transform = init_square(rng, d_m);
    StudentModel {
        layers,
        rsd_transform,
        content_dim,
        position_dim,
    }
}

pub fn train_student<S: Scalar>(
    data: &StudentTrainData<'_, S>,
    config: &DistillConfig,
) -> Result<(StudentModel<S>, TrainLog)> {
    config.validate()?;
    data.check(config)?;
    let n = data.content.rows();
    let labeled_rows: Vec<usize> =
        (0..n).filter(|&v| data.roles[v] == Role::Labeled).collect();
    if labeled_rows.is_empty() {
        return Err(Error::InvalidArgument {
            op: "train_student",
            msg: "labeled set is empty".into(),
        });
    }
    let observed_rows: Vec<usize> =
        (0..n).filter(|&v| data.roles[v] == Role::ObservedUnlabeled).collect();
    let targets: Vec<usize> = labeled_rows.iter().map(|&v| data.labels[v] as usize).collect();

    // batch sampling continues the initialization stream
    let mut rng = rng_from_seed(config.seed);
    let mut model = init_student_with::<S>(
        &mut rng,
        config,
        data.content.cols(),
        data.positions.cols(),
        data.num_classes,
    );

    let x_all = data.content.concat_cols(data.positions)?;
    let use_batch = config.mu > 0.0 || config.eta > 0.0;
    let lambda = S::from_f64_lossy(config.lambda);
    let mu = S::from_f64_lossy(config.mu);
    let eta = S::from_f64_lossy(config.eta);

    let shapes: Vec<(usize, usize)> = model.params().iter().map(Matrix::shape).collect();
    let mut adam = Adam::<S>::new(config.learning_rate, &shapes);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, StudentModel<S>, usize)> = None;

    for epoch in 0..config.epochs {
        let step = (|| -> Result<f64> {
            let mut tape = Tape::new();
            let mut param_ids = Vec::new();
            for layer in &model.layers {
                param_ids.push(tape.input(layer.weight.clone())?);
                param_ids.push(tape.input(layer.bias.clone())?);
            }
            let w_m = tape.input(model.rsd_transform.clone())?;
            let x = tape.constant(x_all.clone())?;
            let (hidden_all, logits_all) = forward_on_tape(&mut tape, &param_ids, x)?;

            let labeled_logits = tape.gather_rows(logits_all, labeled_rows.clone())?;
            let mut total = softmax_cross_entropy(&mut tape, labeled_logits, &targets)?;

            if config.lambda > 0.0 {
                let soft = data.teacher_soft.expect("checked");
                let l_sl = kl_divergence(&mut tape, soft, logits_all)?;
                let weighted = tape.scale(l_sl, lambda)?;
                total = tape.add(total, weighted)?;
            }

            if use_batch {
                let batch = sample_rows(&mut rng, n, config.rsd_batch);
                if config.mu > 0.0 {
                    let teacher_hidden = data.teacher_hidden.expect("checked");
                    let h_batch = tape.gather_rows(hidden_all, batch.clone())?;
                    let hg = teacher_hidden.gather_rows(&batch)?;
                    let l_rsd = rsd_loss_on_tape(&mut tape, &hg, h_batch, w_m)?;
                    let weighted = tape.scale(l_rsd, mu)?;
                    total = tape.add(total, weighted)?;
                }
                if config.eta > 0.0 {
                    let soft = data.teacher_soft.expect("checked");
                    let content_b = data.content.gather_rows(&batch)?;
                    let pos_b = data.positions.gather_rows(&batch)?;
                    let soft_b = soft.gather_rows(&batch)?;
                    let labeled_b: Vec<(usize, usize)> = batch
                        .iter()
                        .enumerate()
                        .filter(|(_, &v)| data.roles[v] == Role::Labeled)
                        .map(|(i, &v)| (i, data.labels[v] as usize))
                        .collect();
                    let x_b = content_b.concat_cols(&pos_b)?;
                    let delta = pgd_perturb(&model, &x_b, &labeled_b, &soft_b, config)?;

                    let content_const = tape.constant(content_b)?;
                    let delta_const = tape.constant(delta)?;
                    let perturbed = tape.add(content_const, delta_const)?;
                    let x_pert = if model.position_dim > 0 {
                        let pos_const = tape.constant(pos_b)?;
                        tape.concat_cols(perturbed, pos_const)?
                    } else {
                        perturbed
                    };
                    let l_adv =
                        adversarial_objective(&mut tape, &param_ids, x_pert, &labeled_b, &soft_b)?;
                    let weighted = tape.scale(l_adv, eta)?;
                    total = tape.add(total, weighted)?;
                }
            }

            let loss_value = tape.scalar_value(total).to_f64().unwrap_or(f64::NAN);
            let mut all_ids = param_ids.clone();
            all_ids.push(w_m);
            let grads = tape.grad(total, &all_ids)?;
            let mut params = model.params();
            adam.step(&mut params, &grads);
            model.set_params(&params);
            Ok(loss_value)
        })();

        let loss_value = step.map_err(|e| match e {
            Error::NonFinite { what } => Error::Divergence {
                epoch,
                learning_rate: config.learning_rate,
                msg: format!("{what} became non-finite"),
            },
            other => other,
        })?;
        if !loss_value.is_finite() || !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                learning_rate: config.learning_rate,
                msg: format!("loss = {loss_value}"),
            });
        }
        log.train_loss.push(loss_value);

        if !observed_rows.is_empty() {
            let preds = student_forward(&model, &x_all)?.1.argmax_rows();
            let hits = observed_rows
                .iter()
                .filter(|&&v| preds[v] == data.labels[v] as usize)
                .count();
            let val_acc = hits as f64 / observed_rows.len() as f64;
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
        Ok((model, log))
    }
}

/// Reference trajectory for the soft-label-only objective: same
/// initialization and update rule, but no batch sampling, no similarity
/// term and no attack anywhere in the loop. Used by the equivalence tests
/// and as the plain-MLP / distilled-MLP baseline in experiments.
pub fn train_plain_baseline<S: Scalar>(
    data: &StudentTrainData<'_, S>,
    config: &DistillConfig,
) -> Result<(StudentModel<S>, TrainLog)> {
    let config = DistillConfig { mu: 0.0, eta: 0.0, ..config.clone() };
    config.validate()?;
    data.check(&config)?;
    let n = data.content.rows();
    let labeled_rows: Vec<usize> =
        (0..n).filter(|&v| data.roles[v] == Role::Labeled).collect();
    if labeled_rows.is_empty() {
        return Err(Error::InvalidArgument {
            op: "train_plain_baseline",
            msg: "labeled set is empty".into(),
        });
    }
    let observed_rows: Vec<usize> =
        (0..n).filter(|&v| data.roles[v] == Role::ObservedUnlabeled).collect();
    let targets: Vec<usize> = labeled_rows.iter().map(|&v| data.labels[v] as usize).collect();

    let mut model = init_student::<S>(
        &config,
        data.content.cols(),
        data.positions.cols(),
        data.num_classes,
    );
    let x_all = data.content.concat_cols(data.positions)?;
    let lambda = S::from_f64_lossy(config.lambda);
    let shapes: Vec<(usize, usize)> = model.params().iter().map(Matrix::shape).collect();
    let mut adam = Adam::<S>::new(config.learning_rate, &shapes);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, StudentModel<S>, usize)> = None;

    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let mut param_ids = Vec::new();
        for layer in &model.layers {
            param_ids.push(tape.input(layer.weight.clone())?);
            param_ids.push(tape.input(layer.bias.clone())?);
        }
        let w_m = tape.input(model.rsd_transform.clone())?;
        let x = tape.constant(x_all.clone())?;
        let (_, logits_all) = forward_on_tape(&mut tape, &param_ids, x)?;
        let labeled_logits = tape.gather_rows(logits_all, labeled_rows.clone())?;
        let mut total = softmax_cross_entropy(&mut tape, labeled_logits, &targets)?;
        if config.lambda > 0.0 {
            let soft = data.teacher_soft.expect("checked");
            let l_sl = kl_divergence(&mut tape, soft, logits_all)?;
            let weighted = tape.scale(l_sl, lambda)?;
            total = tape.add(total, weighted)?;
        }
        let loss_value = tape.scalar_value(total).to_f64().unwrap_or(f64::NAN);
        if !loss_value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                learning_rate: config.learning_rate,
                msg: format!("loss = {loss_value}"),
            });
        }
        log.train_loss.push(loss_value);
        let mut all_ids = param_ids.clone();
        all_ids.push(w_m);
        let grads = tape.grad(total, &all_ids)?;
        let mut params = model.params();
        adam.step(&mut params, &grads);
        model.set_params(&params);

        if !observed_rows.is_empty() {
            let preds = student_forward(&model, &x_all)?.1.argmax_rows();
            let hits = observed_rows
                .iter()
                .filter(|&&v| preds[v] == data.labels[v] as usize)
                .count();
            let val_acc = hits as f64 / observed_rows.len() as f64;
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
        Ok((model, log))
    }
}

/// Samples `k` distinct rows (or all of them if `k >= n`) by partial
/// Fisher-Yates; the result keeps the shuffled order.
fn sample_rows(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.random_range(0..n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudentMeta {
    pub config: DistillConfig,
    pub dataset_path: String,
    pub dataset_hash: String,
    pub teacher_checkpoint_hash: String,
}

/// Checkpoint layout: a leading `1 x 2` matrix holding
/// `[content_dim, position_dim]`, then `[weight, bias]` per layer, then the
/// square transform.
pub fn save_student<S: Scalar>(model: &StudentModel<S>, path: &Path) -> Result<()> {
    let dims = Matrix::new(
        1,
        2,
        vec![
            S::from_f64_lossy(model.content_dim as f64),
            S::from_f64_lossy(model.position_dim as f64),
        ],
    )?;
    let mut mats: Vec<&Matrix<S>> = vec![&dims];
    for l in &model.layers {
        mats.push(&l.weight);
        mats.push(&l.bias);
    }
    mats.push(&model.rsd_transform);
    crate::checkpoint::write_checkpoint(path, STUDENT_MAGIC, &mats)
}

pub fn load_student<S: Scalar>(path: &Path) -> Result<StudentModel<S>> {
    let mats = crate::checkpoint::read_checkpoint::<S>(path, STUDENT_MAGIC)?;
    if mats.len() < 4 || mats.len() % 2 != 0 {
        return Err(Error::Checkpoint(format!(
            "{}: unexpected matrix count {}",
            path.display(),
            mats.len()
        )));
    }
    let dims = &mats[0];
    if dims.shape() != (1, 2) {
        return Err(Error::Checkpoint(format!(
            "{}: malformed dimension header",
            path.display()
        )));
    }
    let content_dim = dims.get(0, 0).to_f64().unwrap_or(-1.0) as usize;
    let position_dim = dims.get(0, 1).to_f64().unwrap_or(-1.0) as usize;
    let body = &mats[1..mats.len() - 1];
    let layers: Vec<DenseLayer<S>> = body
        .chunks_exact(2)
        .map(|c| DenseLayer {
            weight: c[0].clone(),
            bias: c[1].clone(),
        })
        .collect();
    let rsd_transform = mats[mats.len() - 1].clone();
    let model = StudentModel {
        layers,
        rsd_transform,
        content_dim,
        position_dim,
    };
    if model.layers.is_empty() || model.layers[0].in_dim() != model.input_dim() {
        return Err(Error::Checkpoint(format!(
            "{}: layer dimensions inconsistent with header",
            path.display()
        )));
    }
    Ok(model)
}
