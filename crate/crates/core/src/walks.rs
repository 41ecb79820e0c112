//! Uniform random walks over the graph structure.
//!
//! Walks read the adjacency only — content features never enter this module,
//! which is what makes the resulting position features purely structural.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    walks: Vec<Vec<u32>>,
    num_nodes: usize,
    walk_length: usize,
    walks_per_node: usize,
}

impl WalkCorpus {
    pub fn walks(&self) -> &[Vec<u32>] {
        &self.walks
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn walk_length(&self) -> usize {
        self.walk_length
    }

    pub fn walks_per_node(&self) -> usize {
        self.walks_per_node
    }
}

/// `walks_per_node` uniform random walks of `walk_length` nodes from every
/// non-isolated node; isolated nodes contribute a single `[v]` walk. Each
/// start node draws from its own derived RNG stream, so the corpus does not
/// depend on scheduling order.
pub fn sample_walks<S: Scalar>(
    graph: &Graph<S>,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
) -> Result<WalkCorpus> {
    if graph.num_nodes() == 0 {
        return Err(Error::InvalidArgument {
            op: "sample_walks",
            msg: "empty graph".into(),
        });
    }
    if walk_length == 0 || walks_per_node == 0 {
        return Err(Error::InvalidArgument {
            op: "sample_walks",
            msg: "walk_length and walks_per_node must be at least 1".into(),
        });
    }
    let mut walks = Vec::new();
    for start in 0..graph.num_nodes() {
        if graph.degree(start) == 0 {
            walks.push(vec![start as u32]);
            continue;
        }
        let mut rng = rng_from_seed(derive_seed(seed, &format!("walk/{start}")));
        for _ in 0..walks_per_node {
            let mut walk = Vec::with_capacity(walk_length);
            let mut current = start;
            walk.push(current as u32);
            for _ in 1..walk_length {
                let nbrs = graph.neighbors(current);
                current = nbrs[rng.random_range(0..nbrs.len())] as usize;
                walk.push(current as u32);
            }
            walks.push(walk);
        }
    }
    Ok(WalkCorpus {
        walks,
        num_nodes: graph.num_nodes(),
        walk_length,
        walks_per_node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn graph_from_edges(n: usize, edges: &[(u32, u32)]) -> Graph<f64> {
        Graph::new(n, edges, Matrix::zeros(n, 1), vec![0; n], 1).unwrap()
    }

    #[test]
    fn isolated_node_yields_singleton_walk() {
        let g = graph_from_edges(3, &[(0, 1)]);
        let c = sample_walks(&g, 4, 5, 0).unwrap();
        let from_two: Vec<_> = c.walks().iter().filter(|w| w[0] == 2).collect();
        assert_eq!(from_two.len(), 1);
        assert_eq!(from_two[0], &vec![2u32]);
        // 2 non-isolated nodes x 4 walks + 1 singleton
        assert_eq!(c.walks().len(), 2 * 4 + 1);
    }

    #[test]
    fn forced_transitions_on_a_single_edge() {
        let g = graph_from_edges(2, &[(0, 1)]);
        let c = sample_walks(&g, 10, 3, 7).unwrap();
        for w in c.walks().iter().filter(|w| w[0] == 0) {
            assert_eq!(w, &vec![0, 1, 0]);
        }
    }

    #[test]
    fn every_step_is_an_edge() {
        let g = graph_from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]);
        let c = sample_walks(&g, 6, 8, 11).unwrap();
        for w in c.walks() {
            for pair in w.windows(2) {
                assert!(g.adjacency().has_edge(pair[0] as usize, pair[1] as usize));
            }
        }
    }

    #[test]
    fn next_hop_is_uniform_on_a_three_regular_graph() {
        // K4 is 3-regular; look at the first hop from node 0 over many walks.
        let g = graph_from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let c = sample_walks(&g, 10_000, 2, 3).unwrap();
        let mut counts = [0usize; 4];
        for w in c.walks().iter().filter(|w| w[0] == 0) {
            counts[w[1] as usize] += 1;
        }
        let n = 10_000f64;
        let sigma = (n * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for &nbr in &[1usize, 2, 3] {
            assert!(
                (counts[nbr] as f64 - n / 3.0).abs() < 3.0 * sigma,
                "count {} for neighbor {nbr}",
                counts[nbr]
            );
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let g = graph_from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]);
        assert_eq!(sample_walks(&g, 3, 7, 21).unwrap(), sample_walks(&g, 3, 7, 21).unwrap());
        assert_ne!(sample_walks(&g, 3, 7, 21).unwrap(), sample_walks(&g, 3, 7, 22).unwrap());
    }
}
