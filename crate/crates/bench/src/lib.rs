//! Fixtures shared by the benchmarks in `benches/`.

use topoconf_core::graph::synthetic::separable_dataset;
use topoconf_core::graph::LabeledGraph;
use topoconf_core::model::{PreparedGraph, Sample};
use topoconf_core::persistence::{compute_graph_diagrams, fit_grids, pi_tensor_from_diagrams, GraphDiagrams, PiConfig};

/// Graphs of the separable fixture with their diagrams and model samples.
pub struct Fixture {
    pub graphs: Vec<LabeledGraph>,
    pub diagrams: Vec<GraphDiagrams>,
    pub samples: Vec<Sample>,
    pub pi: PiConfig,
}

pub fn fixture(count: usize, resolution: usize) -> Fixture {
    let graphs = separable_dataset(count, 0);
    let pi = PiConfig {
        resolution,
        ..PiConfig::default()
    };
    let diagrams: Vec<GraphDiagrams> = graphs
        .iter()
        .map(|g| compute_graph_diagrams(&g.graph, &pi.filtrations).expect("valid graph"))
        .collect();
    let grids = fit_grids(diagrams.iter(), &pi);
    let samples = graphs
        .iter()
        .zip(&diagrams)
        .map(|(g, d)| Sample {
            graph: PreparedGraph::new(&g.graph, 2).expect("valid graph"),
            pi: pi_tensor_from_diagrams(d, &grids, &pi).expect("valid grid"),
            label: g.label,
        })
        .collect();
    Fixture {
        graphs,
        diagrams,
        samples,
        pi,
    }
}
