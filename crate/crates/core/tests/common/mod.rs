#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use topoconf_core::graph::{Graph, LabeledGraph};
use topoconf_core::model::{PreparedGraph, Sample};
use topoconf_core::persistence::{compute_graph_diagrams, fit_grids, pi_tensor_from_diagrams, PiConfig};
use topoconf_core::tensor::DenseTensor;

/// Samples with PI tensors on grids fitted over the whole set.
pub fn samples_for(graphs: &[LabeledGraph], resolution: usize, tau: usize) -> Vec<Sample> {
    let cfg = PiConfig {
        resolution,
        ..PiConfig::default()
    };
    let diagrams: Vec<_> = graphs
        .iter()
        .map(|lg| compute_graph_diagrams(&lg.graph, &cfg.filtrations).unwrap())
        .collect();
    let grids = fit_grids(diagrams.iter(), &cfg);
    graphs
        .iter()
        .zip(&diagrams)
        .map(|(lg, d)| Sample {
            graph: PreparedGraph::new(&lg.graph, tau).unwrap(),
            pi: pi_tensor_from_diagrams(d, &grids, &cfg).unwrap(),
            label: lg.label,
        })
        .collect()
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, feature_dim: usize) -> Graph {
    let n = rng.random_range(1..=max_nodes);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.35) {
                edges.push((u, v));
            }
        }
    }
    let features = (0..n * feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Graph::new(n, edges, None, feature_dim, features).unwrap()
}

/// Random sample with an arbitrary (not persistence-derived) PI tensor.
pub fn random_sample(rng: &mut ChaCha8Rng, pi_shape: &[usize], feature_dim: usize, classes: usize) -> Sample {
    let g = random_graph(rng, 6, feature_dim);
    Sample {
        graph: PreparedGraph::new(&g, 2).unwrap(),
        pi: DenseTensor::from_fn(pi_shape, |_| rng.random_range(0.0..1.0)),
        label: rng.random_range(0..classes),
    }
}

/// Exhaustive-matching `W_p` between finite diagrams with the L∞ ground metric;
/// every point may also be sent to its nearest diagonal point.
pub fn brute_force_wasserstein(a: &[(f64, f64)], b: &[(f64, f64)], p: i32) -> f64 {
    fn linf(x: (f64, f64), y: (f64, f64)) -> f64 {
        (x.0 - y.0).abs().max((x.1 - y.1).abs())
    }
    fn diag(x: (f64, f64)) -> f64 {
        (x.1 - x.0).abs() / 2.0
    }
    fn go(i: usize, a: &[(f64, f64)], b: &[(f64, f64)], used: &mut Vec<bool>, p: i32) -> f64 {
        if i == a.len() {
            return b
                .iter()
                .zip(used.iter())
                .filter(|(_, &u)| !u)
                .map(|(&y, _)| diag(y).powi(p))
                .sum();
        }
        let mut best = diag(a[i]).powi(p) + go(i + 1, a, b, used, p);
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(linf(a[i], b[j]).powi(p) + go(i + 1, a, b, used, p));
                used[j] = false;
            }
        }
        best
    }
    go(0, a, b, &mut vec![false; b.len()], p).powf(1.0 / p as f64)
}
