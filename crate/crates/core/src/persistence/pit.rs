use serde::{Deserialize, Serialize};

use super::complex::build_sublevel_filtration;
use super::homology::{persistence_diagrams, PersistenceDiagram};
use super::image::{rasterize_persistence_image, GridRange, ImageParams};
use crate::error::{Error, Result};
use crate::filtration::{self, FiltrationKind};
use crate::graph::Graph;
use crate::tensor::DenseTensor;

/// Homology dimensions in a PI tensor.
pub const HOMOLOGY_DIMS: usize = 2;

/// Persistence-image featurisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PiConfig {
    pub filtrations: Vec<FiltrationKind>,
    pub resolution: usize,
    /// `δ = bandwidth_factor × grid side length` on each axis.
    pub bandwidth_factor: f64,
    /// Fraction of the data span added on each side of a fitted grid.
    pub grid_padding: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            filtrations: FiltrationKind::ALL.to_vec(),
            resolution: 50,
            bandwidth_factor: 0.05,
            grid_padding: 0.05,
        }
    }
}

/// H0 and H1 diagrams of one filtration, with the surrogate death for essential classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationDiagrams {
    pub kind: FiltrationKind,
    /// Max filtration value over the graph.
    pub essential_death: f64,
    pub diagrams: [PersistenceDiagram; HOMOLOGY_DIMS],
}

impl FiltrationDiagrams {
    pub fn resolved(&self, dim: usize) -> Vec<(f64, f64)> {
        self.diagrams[dim].resolved(self.essential_death)
    }
}

/// All diagrams of one graph, in filtration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDiagrams {
    pub per_filtration: Vec<FiltrationDiagrams>,
}

pub fn compute_graph_diagrams(g: &Graph, kinds: &[FiltrationKind]) -> Result<GraphDiagrams> {
    let per_filtration = kinds
        .iter()
        .map(|&kind| {
            let f = filtration::compute(kind, g);
            let fc = build_sublevel_filtration(g, &f)?;
            let (h0, h1) = persistence_diagrams(&fc);
            Ok(FiltrationDiagrams {
                kind,
                essential_death: f.max(),
                diagrams: [h0, h1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphDiagrams { per_filtration })
}

/// Frozen image grids, indexed `[filtration][dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiGrids {
    pub ranges: Vec<[GridRange; HOMOLOGY_DIMS]>,
}

/// Fits one grid per (filtration, dim) over the given graphs' diagrams.
pub fn fit_grids<'a>(diagrams: impl IntoIterator<Item = &'a GraphDiagrams> + Clone, config: &PiConfig) -> PiGrids {
    let ranges = (0..config.filtrations.len())
        .map(|k| {
            let fit_dim = |q: usize| {
                let pts = diagrams
                    .clone()
                    .into_iter()
                    .flat_map(|d| d.per_filtration[k].resolved(q));
                GridRange::fit(pts, config.grid_padding)
            };
            [fit_dim(0), fit_dim(1)]
        })
        .collect();
    PiGrids { ranges }
}

/// `K × Q × P × P` tensor of persistence images on frozen grids.
pub fn pi_tensor_from_diagrams(d: &GraphDiagrams, grids: &PiGrids, config: &PiConfig) -> Result<DenseTensor> {
    let k = config.filtrations.len();
    let p = config.resolution;
    if d.per_filtration.len() != k || grids.ranges.len() != k {
        return Err(Error::Shape(format!(
            "{k} filtrations configured, diagrams have {} and grids {}",
            d.per_filtration.len(),
            grids.ranges.len()
        )));
    }
    let mut data = Vec::with_capacity(k * HOMOLOGY_DIMS * p * p);
    for (fd, ranges) in d.per_filtration.iter().zip(&grids.ranges) {
        for (q, range) in ranges.iter().enumerate() {
            let params = ImageParams {
                resolution: p,
                range: *range,
                bandwidth: range.bandwidth(config.bandwidth_factor),
            };
            let img = rasterize_persistence_image(&fd.diagrams[q], &params, fd.essential_death)?;
            data.extend_from_slice(&img.pixels);
        }
    }
    DenseTensor::new(vec![k, HOMOLOGY_DIMS, p, p], data)
}

/// PI tensor of a single graph with grids fitted to that graph alone.
pub fn build_pi_tensor(g: &Graph, config: &PiConfig) -> Result<DenseTensor> {
    let d = compute_graph_diagrams(g, &config.filtrations)?;
    let grids = fit_grids(std::iter::once(&d), config);
    pi_tensor_from_diagrams(&d, &grids, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_default_shape() {
        let g = Graph::from_edges(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
        let t = build_pi_tensor(&g, &PiConfig::default()).unwrap();
        assert_eq!(t.shape(), &[4, 2, 50, 50]);
        assert!(t.data().iter().all(|&x| x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn tree_has_empty_h1_slices() {
        let g = Graph::from_edges(5, vec![(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
        let cfg = PiConfig {
            resolution: 8,
            ..PiConfig::default()
        };
        let t = build_pi_tensor(&g, &cfg).unwrap();
        for k in 0..4 {
            for r in 0..8 {
                for c in 0..8 {
                    assert_eq!(t.get(&[k, 1, r, c]), 0.0);
                }
            }
        }
        assert!(t.data().iter().any(|&x| x > 0.0));
    }
}
