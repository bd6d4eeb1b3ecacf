//! Node centralities used as sublevel filtration functions.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiltrationKind {
    Degree,
    Betweenness,
    Closeness,
    Eigenvector,
}

impl FiltrationKind {
    pub const ALL: [FiltrationKind; 4] = [
        FiltrationKind::Degree,
        FiltrationKind::Betweenness,
        FiltrationKind::Closeness,
        FiltrationKind::Eigenvector,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FiltrationKind::Degree => "degree",
            FiltrationKind::Betweenness => "betweenness",
            FiltrationKind::Closeness => "closeness",
            FiltrationKind::Eigenvector => "eigenvector",
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.get(t as usize).copied()
    }
}

/// One real value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationValues {
    pub kind: FiltrationKind,
    pub values: Vec<f64>,
}

impl FiltrationValues {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn compute(kind: FiltrationKind, g: &Graph) -> FiltrationValues {
    match kind {
        FiltrationKind::Degree => degree_centrality(g),
        FiltrationKind::Betweenness => betweenness_centrality(g),
        FiltrationKind::Closeness => closeness_centrality(g),
        FiltrationKind::Eigenvector => eigenvector_centrality(g),
    }
}

pub fn degree_centrality(g: &Graph) -> FiltrationValues {
    FiltrationValues {
        kind: FiltrationKind::Degree,
        values: (0..g.node_count()).map(|v| g.degree(v) as f64).collect(),
    }
}

/// Unnormalised shortest-path betweenness (Brandes), each unordered pair counted once.
pub fn betweenness_centrality(g: &Graph) -> FiltrationValues {
    let n = g.node_count();
    let mut cb = vec![0.0; n];
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        stack.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = -1;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in g.neighbors(v) {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    FiltrationValues {
        kind: FiltrationKind::Betweenness,
        values: cb.into_iter().map(|x| x / 2.0).collect(),
    }
}

/// Hop-count distances from `s`; `None` for unreachable nodes.
pub(crate) fn bfs_distances(g: &Graph, s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.node_count()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].expect("queued nodes are reached");
        for &w in g.neighbors(v) {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// `(n_v − 1) / Σ_u d(v,u)` within the component of `v`; isolated nodes get 0.
pub fn closeness_centrality(g: &Graph) -> FiltrationValues {
    let values = (0..g.node_count())
        .map(|v| {
            let dist = bfs_distances(g, v);
            let (reach, total) = dist
                .iter()
                .flatten()
                .fold((0usize, 0usize), |(c, t), &d| (c + 1, t + d));
            if total == 0 {
                0.0
            } else {
                (reach - 1) as f64 / total as f64
            }
        })
        .collect();
    FiltrationValues {
        kind: FiltrationKind::Closeness,
        values,
    }
}

const EIG_TOL: f64 = 1e-10;
const EIG_MAX_ITERS: usize = 1000;

/// Principal eigenvector of the adjacency, unit 2-norm and nonnegative.
///
/// Power iteration on `A + I` starting from all-ones; the shift keeps the
/// iteration from oscillating on bipartite graphs without moving eigenvectors.
pub fn eigenvector_centrality(g: &Graph) -> FiltrationValues {
    let n = g.node_count();
    if g.edge_count() == 0 {
        return FiltrationValues {
            kind: FiltrationKind::Eigenvector,
            values: vec![0.0; n],
        };
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    for _ in 0..EIG_MAX_ITERS {
        for v in 0..n {
            next[v] = x[v] + g.neighbors(v).iter().map(|&w| x[w]).sum::<f64>();
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        next.iter_mut().for_each(|a| *a /= norm);
        let change = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if change < EIG_TOL {
            break;
        }
    }
    FiltrationValues {
        kind: FiltrationKind::Eigenvector,
        values: x.into_iter().map(|a| a.max(0.0)).collect(),
    }
}
