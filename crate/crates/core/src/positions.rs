//! Position embeddings: per-node vectors derived from graph structure, with
//! provenance tracking and CSV serialization.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::split::{Role, SplitAssignment, TrainingView};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Row produced by embedding training on the walk-training graph.
    Trained,
    /// Row filled by averaging trained neighbor rows.
    Transferred,
    /// Row is exactly zero (no usable neighbors).
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionTable<S: Scalar> {
    embeddings: Matrix<S>,
    provenance: Vec<Provenance>,
}

impl<S: Scalar> PositionTable<S> {
    pub fn new(embeddings: Matrix<S>, provenance: Vec<Provenance>) -> Result<Self> {
        if provenance.len() != embeddings.rows() {
            return Err(Error::InvalidArgument {
                op: "PositionTable::new",
                msg: format!(
                    "{} provenance entries for {} rows",
                    provenance.len(),
                    embeddings.rows()
                ),
            });
        }
        let table = Self { embeddings, provenance };
        table.validate()?;
        Ok(table)
    }

    /// Table with zero dimension, used for the "no position features" ablation.
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            embeddings: Matrix::zeros(num_nodes, 0),
            provenance: vec![Provenance::Zero; num_nodes],
        }
    }

    pub fn embeddings(&self) -> &Matrix<S> {
        &self.embeddings
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn num_nodes(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn provenance(&self, v: usize) -> Provenance {
        self.provenance[v]
    }

    pub fn provenance_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for p in &self.provenance {
            match p {
                Provenance::Trained => c.0 += 1,
                Provenance::Transferred => c.1 += 1,
                Provenance::Zero => c.2 += 1,
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !self.embeddings.is_finite() {
            return Err(Error::NonFinite {
                what: "position embeddings".into(),
            });
        }
        for (v, p) in self.provenance.iter().enumerate() {
            if *p == Provenance::Zero && self.embeddings.row(v).iter().any(|&x| x != S::zero()) {
                return Err(Error::InvalidArgument {
                    op: "PositionTable::validate",
                    msg: format!("node {v} marked Zero but has a nonzero row"),
                });
            }
        }
        Ok(())
    }

    /// Re-homes a table trained on a view into the parent graph's id space.
    /// Parent nodes absent from the view get zero rows with `Zero` provenance.
    pub fn expand_to_parent(&self, view: &TrainingView<S>, parent_nodes: usize) -> Result<Self> {
        if self.num_nodes() != view.graph.num_nodes() {
            return Err(Error::InvalidArgument {
                op: "expand_to_parent",
                msg: format!(
                    "table has {} rows, view has {}",
                    self.num_nodes(),
                    view.graph.num_nodes()
                ),
            });
        }
        let mut out = Matrix::zeros(parent_nodes, self.dim());
        let mut prov = vec![Provenance::Zero; parent_nodes];
        for (view_id, &parent_id) in view.to_parent.iter().enumerate() {
            out.row_mut(parent_id as usize).copy_from_slice(self.embeddings.row(view_id));
            prov[parent_id as usize] = self.provenance[view_id];
        }
        Ok(Self { embeddings: out, provenance: prov })
    }
}

/// Fills each inductive node with the mean of its trained (non-inductive)
/// neighbors in the full graph; single pass, so a transferred row never
/// feeds another transfer. Trained rows are returned unchanged.
pub fn transfer_positions<S: Scalar>(
    full_graph: &Graph<S>,
    table: &PositionTable<S>,
    split: &SplitAssignment,
) -> Result<PositionTable<S>> {
    let n = full_graph.num_nodes();
    if table.num_nodes() != n || split.num_nodes() != n {
        return Err(Error::InvalidArgument {
            op: "transfer_positions",
            msg: format!(
                "graph has {n} nodes, table {} and split {}",
                table.num_nodes(),
                split.num_nodes()
            ),
        });
    }
    let mut embeddings = table.embeddings.clone();
    let mut provenance = table.provenance.clone();
    for v in 0..n {
        if split.role(v) != Role::InductiveUnlabeled {
            continue;
        }
        let donors: Vec<usize> = full_graph
            .neighbors(v)
            .iter()
            .map(|&u| u as usize)
            .filter(|&u| split.role(u) != Role::InductiveUnlabeled)
            .collect();
        if donors.is_empty() {
            for x in embeddings.row_mut(v) {
                *x = S::zero();
            }
            provenance[v] = Provenance::Zero;
            continue;
        }
        let inv = S::one() / S::from_f64_lossy(donors.len() as f64);
        let dim = table.dim();
        let mut acc = vec![S::zero(); dim];
        for &u in &donors {
            for (a, &x) in acc.iter_mut().zip(table.embeddings.row(u)) {
                *a += x;
            }
        }
        for (o, a) in embeddings.row_mut(v).iter_mut().zip(acc) {
            *o = a * inv;
        }
        provenance[v] = Provenance::Transferred;
    }
    PositionTable::new(embeddings, provenance)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionMeta {
    pub dim: usize,
    pub hyperparameters: BTreeMap<String, serde_json::Value>,
    pub seed: u64,
    pub provenance_counts: ProvenanceCounts,
    /// One char per node: `T`, `X` (transferred) or `Z`.
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub trained: usize,
    pub transferred: usize,
    pub zero: usize,
}

/// Writes `positions.csv` and `positions.meta.json` into `dir`.
pub fn save_positions<S: Scalar>(
    table: &PositionTable<S>,
    dir: &Path,
    hyperparameters: BTreeMap<String, serde_json::Value>,
    seed: u64,
) -> Result<()> {
    let mut csv = String::new();
    for v in 0..table.num_nodes() {
        let row: Vec<String> = table.embeddings().row(v).iter().map(|x| format!("{x}")).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    std::fs::write(dir.join("positions.csv"), csv)?;

    let (trained, transferred, zero) = table.provenance_counts();
    let provenance: String = (0..table.num_nodes())
        .map(|v| match table.provenance(v) {
            Provenance::Trained => 'T',
            Provenance::Transferred => 'X',
            Provenance::Zero => 'Z',
        })
        .collect();
    let meta = PositionMeta {
        dim: table.dim(),
        hyperparameters,
        seed,
        provenance_counts: ProvenanceCounts { trained, transferred, zero },
        provenance,
    };
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(dir.join("positions.meta.json"), json)?;
    Ok(())
}

pub fn load_positions<S: Scalar>(dir: &Path) -> Result<(PositionTable<S>, PositionMeta)> {
    let meta: PositionMeta =
        serde_json::from_str(&std::fs::read_to_string(dir.join("positions.meta.json"))?)?;
    let csv_path = dir.join("positions.csv");
    let csv_name = csv_path.display().to_string();
    let text = std::fs::read_to_string(&csv_path)?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        rows += 1;
        for tok in line.split(',') {
            let x: f64 = tok.parse().map_err(|_| Error::DatasetFormat {
                file: csv_name.clone(),
                line: idx + 1,
                msg: format!("invalid float {tok:?}"),
            })?;
            data.push(S::from_f64_lossy(x));
        }
    }
    if meta.dim == 0 && rows == 0 {
        // dim-0 tables serialize as empty lines; recover the node count from meta
        rows = meta.provenance.len();
    }
    let embeddings = Matrix::new(rows, meta.dim, data)?;
    let provenance: Vec<Provenance> = meta
        .provenance
        .chars()
        .map(|c| match c {
            'T' => Ok(Provenance::Trained),
            'X' => Ok(Provenance::Transferred),
            'Z' => Ok(Provenance::Zero),
            other => Err(Error::InvalidArgument {
                op: "load_positions",
                msg: format!("unknown provenance marker {other:?}"),
            }),
        })
        .collect::<Result<_>>()?;
    let table = PositionTable::new(embeddings, provenance)?;
    Ok((table, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::Role;

    fn graph_with_edges(n: usize, edges: &[(u32, u32)]) -> Graph<f64> {
        Graph::new(n, edges, Matrix::zeros(n, 1), vec![0; n], 1).unwrap()
    }

    fn table(rows: &[Vec<f64>], prov: Vec<Provenance>) -> PositionTable<f64> {
        PositionTable::new(Matrix::from_rows(rows), prov).unwrap()
    }

    #[test]
    fn single_donor_copies_verbatim() {
        let g = graph_with_edges(3, &[(0, 1), (1, 2)]);
        let split = SplitAssignment::from_roles(vec![
            Role::Labeled,
            Role::ObservedUnlabeled,
            Role::InductiveUnlabeled,
        ]);
        let t = table(
            &[vec![1.0, 2.0], vec![-3.0, 4.0], vec![0.0, 0.0]],
            vec![Provenance::Trained, Provenance::Trained, Provenance::Zero],
        );
        let out = transfer_positions(&g, &t, &split).unwrap();
        assert_eq!(out.embeddings().row(2), &[-3.0, 4.0]);
        assert_eq!(out.provenance(2), Provenance::Transferred);
        // trained rows untouched
        assert_eq!(out.embeddings().row(0), &[1.0, 2.0]);
        assert_eq!(out.embeddings().row(1), &[-3.0, 4.0]);
    }

    #[test]
    fn opposite_donors_cancel_but_stay_transferred() {
        let g = graph_with_edges(3, &[(0, 2), (1, 2)]);
        let split = SplitAssignment::from_roles(vec![
            Role::ObservedUnlabeled,
            Role::ObservedUnlabeled,
            Role::InductiveUnlabeled,
        ]);
        let t = table(
            &[vec![1.0, -2.0], vec![-1.0, 2.0], vec![0.0, 0.0]],
            vec![Provenance::Trained, Provenance::Trained, Provenance::Zero],
        );
        let out = transfer_positions(&g, &t, &split).unwrap();
        assert_eq!(out.embeddings().row(2), &[0.0, 0.0]);
        assert_eq!(out.provenance(2), Provenance::Transferred);
    }

    #[test]
    fn inductive_only_neighborhood_gets_zero_provenance() {
        let g = graph_with_edges(3, &[(1, 2)]);
        let split = SplitAssignment::from_roles(vec![
            Role::Labeled,
            Role::InductiveUnlabeled,
            Role::InductiveUnlabeled,
        ]);
        let t = table(
            &[vec![5.0], vec![0.0], vec![0.0]],
            vec![Provenance::Trained, Provenance::Zero, Provenance::Zero],
        );
        let out = transfer_positions(&g, &t, &split).unwrap();
        assert_eq!(out.provenance(1), Provenance::Zero);
        assert_eq!(out.provenance(2), Provenance::Zero);
        assert_eq!(out.embeddings().row(1), &[0.0]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(
            &[vec![0.1, -2.5e-7], vec![3.25, 4.0], vec![0.0, 0.0]],
            vec![Provenance::Trained, Provenance::Transferred, Provenance::Zero],
        );
        save_positions(&t, dir.path(), BTreeMap::new(), 42).unwrap();
        let (loaded, meta) = load_positions::<f64>(dir.path()).unwrap();
        assert_eq!(loaded, t);
        assert_eq!(meta.seed, 42);
        assert_eq!(meta.provenance_counts.trained, 1);
        assert_eq!(meta.provenance_counts.transferred, 1);
        assert_eq!(meta.provenance_counts.zero, 1);
    }
}
