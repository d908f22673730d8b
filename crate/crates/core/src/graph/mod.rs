//! Attributed undirected graphs with a binary sensitive attribute.
//!
//! Besides the [`Graph`] container this module hosts the edge-group
//! statistics (inter- vs intra-group edges and the group balance score),
//! k-hop ego-network partitioning into federated clients, the stochastic
//! block model generator and the CSV loaders.

mod io;
mod partition;
mod sbm;

pub use io::{load_csv, parse_edges_csv, parse_nodes_csv, EdgeLoadReport};
pub use partition::{ego_network, partition_ego_networks, EgoNetwork, MAX_CENTER_RETRIES};
pub use sbm::{generate_sbm, LabelRule, SbmConfig};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no edges; group balance score is undefined")]
    EmptyEdgeSet,
    #[error("requested {requested} clients but graph only has {available} nodes")]
    InsufficientNodes { requested: usize, available: usize },
    #[error("ego-network around node {center} has no edges after {attempts} attempts")]
    EmptyClient { center: usize, attempts: usize },
    #[error("edge ({0}, {1}) references a node outside the graph")]
    NodeOutOfRange(usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite feature at node {node}, column {column}")]
    NonFiniteFeature { node: usize, column: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },
    #[error("row {row}: field `{field}` must be 0 or 1")]
    BinaryViolation { row: usize, field: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Undirected simple graph with node features, a binary sensitive attribute
/// and a binary label per node.
///
/// Edges are stored once with `u < v`, sorted. Self-loops are never stored;
/// the GCN normalization adds them implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    features: Matrix,
    sensitive: Vec<bool>,
    labels: Vec<bool>,
}

impl Graph {
    /// Builds a graph. Edge direction and duplicates are normalized away;
    /// self-loops and out-of-range endpoints are errors.
    pub fn new(
        features: Matrix,
        sensitive: Vec<bool>,
        labels: Vec<bool>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let n = features.rows();
        if sensitive.len() != n || labels.len() != n {
            return Err(GraphError::LengthMismatch(format!(
                "{n} feature rows, {} sensitive values, {} labels",
                sensitive.len(),
                labels.len()
            )));
        }
        for node in 0..n {
            if let Some(column) = features.row(node).iter().position(|v| !v.is_finite()) {
                return Err(GraphError::NonFiniteFeature { node, column });
            }
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::NodeOutOfRange(u, v));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            edges,
            adjacency,
            features,
            sensitive,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.sensitive.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn sensitive(&self) -> &[bool] {
        &self.sensitive
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Node counts `(N₀, N₁)` for sensitive values 0 and 1.
    pub fn group_sizes(&self) -> (usize, usize) {
        let n1 = self.sensitive.iter().filter(|&&s| s).count();
        (self.num_nodes() - n1, n1)
    }

    /// Subgraph induced by `nodes` (global ids, in the given order). Local id
    /// `i` corresponds to `nodes[i]`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut local = vec![usize::MAX; self.num_nodes()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let d = self.feature_dim();
        let mut features = Matrix::zeros(nodes.len(), d);
        for (i, &v) in nodes.iter().enumerate() {
            features.row_mut(i).copy_from_slice(self.features.row(v));
        }
        let mut edges = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            for &w in &self.adjacency[v] {
                let j = local[w];
                if j != usize::MAX && i < j {
                    edges.push((i, j));
                }
            }
        }
        Graph::new(
            features,
            nodes.iter().map(|&v| self.sensitive[v]).collect(),
            nodes.iter().map(|&v| self.labels[v]).collect(),
            edges,
        )
        .expect("induced subgraph of a valid graph is valid")
    }

    /// Drops nodes with no incident edge. Returns the new graph and, for each
    /// new node, its id in `self`.
    pub fn without_isolated(&self) -> (Graph, Vec<usize>) {
        let keep: Vec<usize> = (0..self.num_nodes())
            .filter(|&v| !self.adjacency[v].is_empty())
            .collect();
        (self.induced_subgraph(&keep), keep)
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.num_nodes();
        assert_eq!(perm.len(), n);
        let mut inverse = vec![0; n];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        let mut g = self.induced_subgraph(&inverse);
        g.edges.sort_unstable();
        g
    }

    /// Same graph with every sensitive bit flipped.
    pub fn with_flipped_sensitive(&self) -> Graph {
        let mut g = self.clone();
        for s in &mut g.sensitive {
            *s = !*s;
        }
        g
    }
}

/// Inter-/intra-group edge counts and the group balance score
/// `B = 1 − |H_intra − H_inter|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeGroupStats {
    pub n_inter: usize,
    pub n_intra: usize,
    pub h_inter: f64,
    pub h_intra: f64,
    pub gbs: f64,
}

impl EdgeGroupStats {
    pub fn from_counts(n_intra: usize, n_inter: usize) -> Result<Self, GraphError> {
        let total = n_intra + n_inter;
        if total == 0 {
            return Err(GraphError::EmptyEdgeSet);
        }
        let h_intra = n_intra as f64 / total as f64;
        let h_inter = n_inter as f64 / total as f64;
        Ok(Self {
            n_inter,
            n_intra,
            h_inter,
            h_intra,
            gbs: 1.0 - (h_intra - h_inter).abs(),
        })
    }

    pub fn num_edges(&self) -> usize {
        self.n_inter + self.n_intra
    }
}

/// Classifies every edge as inter-group (`s[u] ≠ s[v]`) or intra-group.
pub fn edge_group_stats(g: &Graph) -> Result<EdgeGroupStats, GraphError> {
    let s = g.sensitive();
    let n_inter = g.edges().iter().filter(|&&(u, v)| s[u] != s[v]).count();
    EdgeGroupStats::from_counts(g.num_edges() - n_inter, n_inter)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Graph with zero features of width `d`.
    pub fn bare(sensitive: &[u8], edges: &[(usize, usize)], d: usize) -> Graph {
        let n = sensitive.len();
        Graph::new(
            Matrix::zeros(n, d),
            sensitive.iter().map(|&b| b == 1).collect(),
            vec![false; n],
            edges.iter().copied(),
        )
        .unwrap()
    }
}
