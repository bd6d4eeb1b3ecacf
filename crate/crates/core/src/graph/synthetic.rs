use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, LabeledGraph};

/// Random labelled tree on `n` nodes (each node after the first attaches to a
/// uniformly chosen earlier node).
pub fn random_tree(n: usize, rng: &mut impl Rng) -> Graph {
    let edges = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    Graph::from_edges(n, edges).expect("tree edges are valid")
}

/// Connected graph with exactly one cycle: a cycle of length `cycle_len` with
/// random trees hanging off it, `n` nodes in total.
pub fn random_unicyclic(n: usize, cycle_len: usize, rng: &mut impl Rng) -> Graph {
    assert!(cycle_len >= 3 && cycle_len <= n);
    let mut edges: Vec<(usize, usize)> = (0..cycle_len).map(|i| (i, (i + 1) % cycle_len)).collect();
    edges.extend((cycle_len..n).map(|v| (rng.random_range(0..v), v)));
    Graph::from_edges(n, edges).expect("unicyclic edges are valid")
}

/// Balanced two-class set: label 0 are trees, label 1 single-cycle graphs, with
/// 6 to 12 nodes each. Graph `i` has label `i % 2`.
pub fn separable_dataset(count: usize, seed: u64) -> Vec<LabeledGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(6..=12);
            let graph = if i % 2 == 0 {
                random_tree(n, &mut rng)
            } else {
                let c = rng.random_range(3..=n.min(6));
                random_unicyclic(n, c, &mut rng)
            };
            LabeledGraph { graph, label: i % 2 }
        })
        .collect()
}
