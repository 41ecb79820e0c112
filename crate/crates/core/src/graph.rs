//! Graph storage and dataset ingestion.
//!
//! Graphs are undirected: every edge is stored in both directions, neighbor
//! lists are sorted and deduplicated, and self-loops are never stored (the
//! teacher layer adds the self term itself).

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use std::path::Path;
use std::sync::Arc;

/// Compressed sparse row adjacency. Symmetric by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Csr {
    /// Builds from undirected edges; deduplicates, drops self-loops.
    pub fn from_undirected_edges(num_nodes: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(Error::GraphInvariant(format!(
                    "edge ({u}, {v}) references a node id >= {num_nodes}"
                )));
            }
            if u == v {
                continue;
            }
            lists[u as usize].push(v);
            lists[v as usize].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    pub fn iter_undirected_edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| (u as u32) < v)
                .map(move |&v| (u as u32, v))
        })
    }

    /// `out_v = x_v + sum of x_u over neighbors u` (no normalization).
    pub fn sum_with_self<S: Scalar>(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        if x.rows() != self.num_nodes() {
            return Err(Error::ShapeMismatch {
                op: "sum_with_self",
                lhs: (x.rows(), x.cols()),
                rhs: (self.num_nodes(), x.cols()),
            });
        }
        let cols = x.cols();
        let mut out = x.clone();
        for v in 0..self.num_nodes() {
            // split_at_mut dance avoided: accumulate into a scratch row
            let mut acc = out.row(v).to_vec();
            for &u in self.neighbors(v) {
                let urow = x.row(u as usize);
                for (a, &b) in acc.iter_mut().zip(urow) {
                    *a += b;
                }
            }
            out.row_mut(v)[..cols].copy_from_slice(&acc);
        }
        Ok(out)
    }

    /// GCN-style mean over `{v} ∪ N(v)`.
    pub fn mean_with_self<S: Scalar>(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        let mut out = self.sum_with_self(x)?;
        for v in 0..self.num_nodes() {
            let inv = S::one() / S::from_f64_lossy((1 + self.degree(v)) as f64);
            for o in out.row_mut(v) {
                *o *= inv;
            }
        }
        Ok(out)
    }

    /// Adjoint of [`Csr::mean_with_self`]: scale rows by `1/(1+deg)`, then
    /// sum with self (valid because the adjacency is symmetric).
    pub fn mean_with_self_adjoint<S: Scalar>(&self, g: &Matrix<S>) -> Result<Matrix<S>> {
        let mut scaled = g.clone();
        for v in 0..self.num_nodes() {
            let inv = S::one() / S::from_f64_lossy((1 + self.degree(v)) as f64);
            for o in scaled.row_mut(v) {
                *o *= inv;
            }
        }
        self.sum_with_self(&scaled)
    }
}

/// Immutable node/edge store with content features and labels.
#[derive(Debug, Clone)]
pub struct Graph<S: Scalar> {
    adjacency: Arc<Csr>,
    content: Matrix<S>,
    labels: Vec<u32>,
    num_classes: usize,
}

impl<S: Scalar> Graph<S> {
    pub fn new(
        num_nodes: usize,
        edges: &[(u32, u32)],
        content: Matrix<S>,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Result<Self> {
        if content.rows() != num_nodes {
            return Err(Error::GraphInvariant(format!(
                "feature matrix has {} rows for {} nodes",
                content.rows(),
                num_nodes
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::GraphInvariant(format!(
                "{} labels for {} nodes",
                labels.len(),
                num_nodes
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= num_classes) {
            return Err(Error::GraphInvariant(format!(
                "label {l} of node {i} out of range [0, {num_classes})"
            )));
        }
        if !content.is_finite() {
            return Err(Error::NonFinite {
                what: "content features".into(),
            });
        }
        let adjacency = Arc::new(Csr::from_undirected_edges(num_nodes, edges)?);
        Ok(Self {
            adjacency,
            content,
            labels,
            num_classes,
        })
    }

    /// Same graph with the content features replaced.
    pub fn with_content(&self, content: Matrix<S>) -> Result<Self> {
        if content.rows() != self.num_nodes() {
            return Err(Error::GraphInvariant(format!(
                "feature matrix has {} rows for {} nodes",
                content.rows(),
                self.num_nodes()
            )));
        }
        if !content.is_finite() {
            return Err(Error::NonFinite {
                what: "content features".into(),
            });
        }
        Ok(Self {
            adjacency: Arc::clone(&self.adjacency),
            content,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.num_edges()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &Arc<Csr> {
        &self.adjacency
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        self.adjacency.neighbors(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.degree(v)
    }

    pub fn content(&self) -> &Matrix<S> {
        &self.content
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v] as usize
    }

    /// Checks every structural invariant; run by tests and `--check` mode.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        for v in 0..n {
            let nbrs = self.adjacency.neighbors(v);
            for w in nbrs.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::GraphInvariant(format!(
                        "neighbor list of {v} not strictly ascending"
                    )));
                }
            }
            for &u in nbrs {
                if u as usize == v {
                    return Err(Error::GraphInvariant(format!("self-loop at {v}")));
                }
                if u as usize >= n {
                    return Err(Error::GraphInvariant(format!(
                        "neighbor {u} of {v} out of range"
                    )));
                }
                if !self.adjacency.has_edge(u as usize, v) {
                    return Err(Error::GraphInvariant(format!(
                        "asymmetric edge {v} -> {u}"
                    )));
                }
            }
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l as usize >= self.num_classes {
                return Err(Error::GraphInvariant(format!(
                    "label {l} of node {i} out of range"
                )));
            }
        }
        if !self.content.is_finite() {
            return Err(Error::NonFinite {
                what: "content features".into(),
            });
        }
        Ok(())
    }
}

/// Ingestion counters reported by [`load_graph`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub self_loops_dropped: usize,
    pub duplicate_edges_merged: usize,
}

/// Loads `edges.tsv`, `features.csv` and `labels.csv` from a directory.
pub fn load_graph<S: Scalar>(dir: &Path) -> Result<(Graph<S>, LoadStats)> {
    let features_path = dir.join("features.csv");
    let features_name = features_path.display().to_string();
    let text = std::fs::read_to_string(&features_path).map_err(|e| Error::DatasetFormat {
        file: features_name.clone(),
        line: 0,
        msg: format!("cannot read: {e}"),
    })?;
    let mut rows: Vec<Vec<S>> = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Error::DatasetFormat {
                    file: features_name.clone(),
                    line: idx + 1,
                    msg: format!("invalid float {t:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(d) = dim {
            if row.len() != d {
                return Err(Error::DatasetFormat {
                    file: features_name.clone(),
                    line: idx + 1,
                    msg: format!("ragged row: {} values, expected {d}", row.len()),
                });
            }
        } else {
            dim = Some(row.len());
        }
        rows.push(row.into_iter().map(S::from_f64_lossy).collect());
    }
    let n = rows.len();
    let d = dim.unwrap_or(0);
    let content = Matrix::new(n, d, rows.into_iter().flatten().collect())?;

    let labels_path = dir.join("labels.csv");
    let labels_name = labels_path.display().to_string();
    let text = std::fs::read_to_string(&labels_path).map_err(|e| Error::DatasetFormat {
        file: labels_name.clone(),
        line: 0,
        msg: format!("cannot read: {e}"),
    })?;
    let mut labels = Vec::with_capacity(n);
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let l: i64 = t.parse().map_err(|_| Error::DatasetFormat {
            file: labels_name.clone(),
            line: idx + 1,
            msg: format!("invalid class id {t:?}"),
        })?;
        if l < 0 {
            return Err(Error::DatasetFormat {
                file: labels_name.clone(),
                line: idx + 1,
                msg: format!("negative class id {l}"),
            });
        }
        labels.push(l as u32);
    }
    if labels.len() != n {
        return Err(Error::DatasetFormat {
            file: labels_name,
            line: 0,
            msg: format!("{} labels for {n} feature rows", labels.len()),
        });
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);

    let edges_path = dir.join("edges.tsv");
    let edges_name = edges_path.display().to_string();
    let text = std::fs::read_to_string(&edges_path).map_err(|e| Error::DatasetFormat {
        file: edges_name.clone(),
        line: 0,
        msg: format!("cannot read: {e}"),
    })?;
    let mut stats = LoadStats::default();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u32> {
            let tok = tok.ok_or_else(|| Error::DatasetFormat {
                file: edges_name.clone(),
                line: idx + 1,
                msg: "expected `src<TAB>dst`".into(),
            })?;
            tok.parse::<u32>().map_err(|_| Error::DatasetFormat {
                file: edges_name.clone(),
                line: idx + 1,
                msg: format!("invalid node id {tok:?}"),
            })
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        for id in [u, v] {
            if id as usize >= n {
                return Err(Error::DatasetFormat {
                    file: edges_name.clone(),
                    line: idx + 1,
                    msg: format!("node {id} out of range for {n} nodes"),
                });
            }
        }
        if u == v {
            stats.self_loops_dropped += 1;
            continue;
        }
        edges.push((u.min(v), u.max(v)));
    }
    let before = edges.len();
    edges.sort_unstable();
    edges.dedup();
    stats.duplicate_edges_merged = before - edges.len();

    let graph = Graph::new(n, &edges, content, labels, num_classes)?;
    Ok((graph, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_dataset(dir: &Path, edges: &str, features: &str, labels: &str) {
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("features.csv"), features).unwrap();
        fs::write(dir.join("labels.csv"), labels).unwrap();
    }

    #[test]
    fn triangle_loads_with_degree_two() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(
            dir.path(),
            "0\t1\n1\t2\n2\t0\n",
            "1.0\n2.0\n3.0\n",
            "0\n1\n0\n",
        );
        let (g, stats) = load_graph::<f64>(dir.path()).unwrap();
        g.validate().unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 3);
        for v in 0..3 {
            assert_eq!(g.degree(v), 2);
        }
        assert_eq!(stats, LoadStats::default());
    }

    #[test]
    fn reversed_duplicate_merges_to_one_edge() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "0\t1\n1\t0\n", "0.5\n0.5\n", "0\n0\n");
        let (g, stats) = load_graph::<f64>(dir.path()).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.degree(1), 1);
        assert_eq!(stats.duplicate_edges_merged, 1);
    }

    #[test]
    fn out_of_range_node_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "5\t0\n", "0.1\n0.2\n0.3\n", "0\n0\n1\n");
        let err = load_graph::<f64>(dir.path()).unwrap_err().to_string();
        assert!(err.contains("node 5"), "{err}");
        assert!(err.contains("edges.tsv:1"), "{err}");
    }

    #[test]
    fn ragged_feature_row_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "", "1.0,2.0\n3.0\n", "0\n0\n");
        let err = load_graph::<f64>(dir.path()).unwrap_err().to_string();
        assert!(err.contains("ragged"), "{err}");
        assert!(err.contains("features.csv:2"), "{err}");
    }

    #[test]
    fn self_loops_dropped_with_count() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "0\t0\n0\t1\n", "1.0\n2.0\n", "0\n1\n");
        let (g, stats) = load_graph::<f64>(dir.path()).unwrap();
        assert_eq!(stats.self_loops_dropped, 1);
        assert_eq!(g.num_edges(), 1);
        g.validate().unwrap();
    }

    #[test]
    fn comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "# header\n0\t1\n", "1.0\n2.0\n", "0\n1\n");
        let (g, _) = load_graph::<f64>(dir.path()).unwrap();
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn mean_with_self_constant_field_is_fixed_point() {
        let g = Csr::from_undirected_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let x = Matrix::filled(4, 3, 2.5f64);
        let m = g.mean_with_self(&x).unwrap();
        for v in 0..4 {
            for &e in m.row(v) {
                assert!((e - 2.5).abs() < 1e-15);
            }
        }
    }
}
