//! Sublevel filtrations, 0/1-dimensional persistent homology, persistence
//! images, Wasserstein distances and PI-tensor assembly.

mod complex;
mod homology;
mod image;
mod pit;
mod similarity;
mod wasserstein;

pub use complex::{build_from_values, build_sublevel_filtration, FilteredComplex, Simplex};
pub use homology::{compute_ph0, compute_ph1, persistence_diagrams, PersistenceDiagram, PersistencePoint};
pub use image::{persistence_weight, rasterize_persistence_image, GridRange, ImageParams, PersistenceImage};
pub use pit::{
    build_pi_tensor, compute_graph_diagrams, fit_grids, pi_tensor_from_diagrams, FiltrationDiagrams, GraphDiagrams,
    PiConfig, PiGrids, HOMOLOGY_DIMS,
};
pub use similarity::{embedding_distance, graph_similarity, topological_distance, GraphFeatures, SimilarityMeasure};
pub use wasserstein::{diagonal_distance, min_cost_assignment, wasserstein_distance, wasserstein_points};
