//! Topological features, a low-rank tensor graph classifier and conditional
//! conformal prediction sets for graph classification.

pub mod autodiff;
pub mod conformal;
pub mod error;
pub mod filtration;
pub mod graph;
pub mod model;
pub mod persistence;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use filtration::{FiltrationKind, FiltrationValues};
pub use graph::{DatasetSplit, Graph, LabeledGraph};
pub use persistence::{PersistenceDiagram, PersistenceImage, SimilarityMeasure};
pub use tensor::DenseTensor;

/// Version string embedded in every artifact this crate writes.
pub const ARTIFACT_VERSION: &str = concat!("topoconf/", env!("CARGO_PKG_VERSION"));
