//! Stochastic block model generator.
//!
//! Provides desk-scale datasets whose labels correlate with structure:
//! label = block id, intra-block edge probability `p_in`, inter-block
//! `p_out`, and content features that interpolate between a block-specific
//! mean vector and pure Gaussian noise.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SbmParams {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Mixes the block mean into the features: `signal * mean + (1 - signal) * noise`.
    pub feature_signal: f64,
}

/// Block `b`'s mean vector: the standard basis vector `e_{b mod d}`.
fn block_mean(block: usize, dim: usize) -> usize {
    block % dim.max(1)
}

pub fn generate_sbm<S: Scalar>(params: &SbmParams, seed: u64) -> Result<Graph<S>> {
    let SbmParams {
        blocks,
        nodes_per_block,
        p_in,
        p_out,
        feature_dim,
        feature_signal,
    } = *params;
    if blocks == 0 || nodes_per_block == 0 || feature_dim == 0 {
        return Err(Error::InvalidArgument {
            op: "generate_sbm",
            msg: "blocks, nodes_per_block and feature_dim must be positive".into(),
        });
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::InvalidArgument {
            op: "generate_sbm",
            msg: format!("probabilities must lie in [0, 1], got p_in={p_in}, p_out={p_out}"),
        });
    }
    if p_out > p_in {
        return Err(Error::InvalidArgument {
            op: "generate_sbm",
            msg: format!("p_out={p_out} exceeds p_in={p_in}; assortative blocks required"),
        });
    }
    if !(0.0..=1.0).contains(&feature_signal) {
        return Err(Error::InvalidArgument {
            op: "generate_sbm",
            msg: format!("feature_signal={feature_signal} outside [0, 1]"),
        });
    }

    let n = blocks * nodes_per_block;
    let labels: Vec<u32> = (0..n).map(|v| (v / nodes_per_block) as u32).collect();

    let mut rng = rng_from_seed(seed);
    // Edges first, then features, in a fixed order; the layout is part of
    // the determinism contract.
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((u as u32, v as u32));
            }
        }
    }

    let noise_scale = 1.0 - feature_signal;
    let mut data = Vec::with_capacity(n * feature_dim);
    for v in 0..n {
        let mean_coord = block_mean(labels[v] as usize, feature_dim);
        for j in 0..feature_dim {
            let noise: f64 = rng.sample(StandardNormal);
            let mean = if j == mean_coord { feature_signal } else { 0.0 };
            data.push(S::from_f64_lossy(mean + noise_scale * noise));
        }
    }
    let content = Matrix::new(n, feature_dim, data)?;
    Graph::new(n, &edges, content, labels, blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(blocks: usize, npb: usize, p_in: f64, p_out: f64, signal: f64) -> SbmParams {
        SbmParams {
            blocks,
            nodes_per_block: npb,
            p_in,
            p_out,
            feature_dim: 8,
            feature_signal: signal,
        }
    }

    #[test]
    fn extreme_probabilities_give_disjoint_cliques() {
        let g = generate_sbm::<f64>(&params(2, 4, 1.0, 0.0, 0.5), 1).unwrap();
        g.validate().unwrap();
        assert_eq!(g.num_edges(), 2 * 6); // two K4s
        for v in 0..8 {
            assert_eq!(g.degree(v), 3);
            for &u in g.neighbors(v) {
                assert_eq!(g.label(v), g.label(u as usize));
            }
        }
    }

    #[test]
    fn zero_signal_decouples_features_from_labels() {
        // With feature_signal = 0 the per-class feature means coincide; check
        // their gap shrinks toward 0 at the 4-sigma level for N = 4000.
        let g = generate_sbm::<f64>(&params(2, 2000, 0.0, 0.0, 0.0), 3).unwrap();
        let d = g.content().cols();
        let mut means = [vec![0.0; d], vec![0.0; d]];
        for v in 0..g.num_nodes() {
            for (m, &x) in means[g.label(v)].iter_mut().zip(g.content().row(v)) {
                *m += x;
            }
        }
        let per_class = 2000.0;
        for j in 0..d {
            let gap = (means[0][j] - means[1][j]).abs() / per_class;
            // std of the gap is sqrt(2/2000) ~ 0.0316
            assert!(gap < 4.0 * (2.0f64 / per_class).sqrt(), "gap {gap} at dim {j}");
        }
    }

    #[test]
    fn intra_block_edge_count_matches_binomial_expectation() {
        let g = generate_sbm::<f64>(&params(2, 100, 0.1, 0.01, 0.5), 42).unwrap();
        let mut intra = 0usize;
        for (u, v) in g.adjacency().iter_undirected_edges() {
            if g.label(u as usize) == g.label(v as usize) {
                intra += 1;
            }
        }
        // 2 * C(100,2) * 0.1 = 990 expected, sigma = sqrt(9900 * 0.1 * 0.9) ~ 29.8
        let expectation = 990.0;
        let sigma = (9900.0f64 * 0.1 * 0.9).sqrt();
        assert!(
            (intra as f64 - expectation).abs() < 4.0 * sigma,
            "intra-block edges {intra}"
        );
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_sbm::<f64>(&params(3, 20, 0.3, 0.05, 0.7), 9).unwrap();
        let b = generate_sbm::<f64>(&params(3, 20, 0.3, 0.05, 0.7), 9).unwrap();
        assert_eq!(a.content(), b.content());
        assert_eq!(a.adjacency(), b.adjacency());
        let c = generate_sbm::<f64>(&params(3, 20, 0.3, 0.05, 0.7), 10).unwrap();
        assert_ne!(a.adjacency(), c.adjacency());
    }

    #[test]
    fn disassortative_request_is_rejected() {
        let err = generate_sbm::<f64>(&params(2, 10, 0.1, 0.5, 0.5), 0).map(|_| ());
        assert!(err.is_err());
    }
}
