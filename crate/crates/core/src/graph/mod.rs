//! Graph data model, TUDataset ingestion, splitting and adjacency matrices.

mod split;
pub mod synthetic;
mod tudataset;

use serde::{Deserialize, Serialize};

pub use split::{split_dataset, DatasetSplit, Subset};
pub use tudataset::load_tudataset;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Undirected simple graph with node features.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    edge_weights: Option<Vec<f64>>,
    feature_dim: usize,
    /// `node_count × feature_dim`, row-major.
    features: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        edge_weights: Option<Vec<f64>>,
        feature_dim: usize,
        features: Vec<f64>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        if features.len() != node_count * feature_dim {
            return Err(Error::InvalidGraph(format!(
                "{} feature values for {node_count} nodes of width {feature_dim}",
                features.len()
            )));
        }
        if let Some(w) = &edge_weights {
            if w.len() != edges.len() {
                return Err(Error::InvalidGraph("edge weights not aligned with edges".into()));
            }
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidGraph("edge weights must be positive".into()));
            }
        }
        let mut neighbors = vec![Vec::new(); node_count];
        for &(u, v) in &edges {
            if u >= node_count || v >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u},{v}) out of range for {node_count} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            if neighbors[u].contains(&v) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u},{v})")));
            }
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        Ok(Self {
            node_count,
            edges,
            edge_weights,
            feature_dim,
            features,
            neighbors,
        })
    }

    /// Graph with a single constant feature 1.0 per node.
    pub fn from_edges(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(node_count, edges, None, 1, vec![1.0; node_count])
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        self.edge_weights.as_deref()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, v: usize) -> &[f64] {
        &self.features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.node_count];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..self.node_count {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &w in &self.neighbors[u] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }

    /// Dense symmetric 0/1 adjacency.
    pub fn adjacency(&self) -> DenseTensor {
        let n = self.node_count;
        let mut a = DenseTensor::zeros(&[n, n]);
        for &(u, v) in &self.edges {
            a.set(&[u, v], 1.0);
            a.set(&[v, u], 1.0);
        }
        a
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count;
        if perm.len() != n {
            return Err(Error::InvalidGraph("permutation length mismatch".into()));
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut features = vec![0.0; self.features.len()];
        for v in 0..n {
            let f = self.feature_dim;
            features[perm[v] * f..(perm[v] + 1) * f].copy_from_slice(self.feature_row(v));
        }
        Self::new(n, edges, self.edge_weights.clone(), self.feature_dim, features)
    }
}

/// A graph with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub label: usize,
}

/// How the self-loop-augmented adjacency is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyNorm {
    /// `D̃^{-1/2} Ã D̃^{-1/2}`.
    #[default]
    Symmetric,
    /// `D̃^{-1/2} Ã D̃^{+1/2}`, the literal written form with a positive right exponent.
    PositiveRight,
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` where `D̃` holds the row sums of `A + I`.
pub fn normalized_adjacency(g: &Graph) -> DenseTensor {
    normalized_adjacency_with(g, AdjacencyNorm::Symmetric)
}

pub fn normalized_adjacency_with(g: &Graph, norm: AdjacencyNorm) -> DenseTensor {
    let n = g.node_count();
    let deg: Vec<f64> = (0..n).map(|v| g.degree(v) as f64 + 1.0).collect();
    let right = match norm {
        AdjacencyNorm::Symmetric => -0.5,
        AdjacencyNorm::PositiveRight => 0.5,
    };
    DenseTensor::from_fn(&[n, n], |ix| {
        let (i, j) = (ix[0], ix[1]);
        let a = if i == j || g.neighbors(i).contains(&j) {
            1.0
        } else {
            0.0
        };
        if a == 0.0 {
            0.0
        } else {
            deg[i].powf(-0.5) * deg[j].powf(right)
        }
    })
}
