use serde::{Deserialize, Serialize};

use super::pit::{GraphDiagrams, HOMOLOGY_DIMS};
use super::wasserstein::wasserstein_points;
use crate::error::{Error, Result};
use crate::filtration::FiltrationKind;

/// How two graphs are compared when selecting local calibration neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SimilarityMeasure {
    /// Sum of `W₁` distances over every (filtration, dim) pair.
    Topological,
    /// `W₁` distance of a single (filtration, dim) pair.
    TopologicalSingle { filtration: FiltrationKind, dim: u8 },
    /// Euclidean distance between learned graph embeddings.
    Embedding,
}

impl SimilarityMeasure {
    /// Suffix used for output files: `E`, `T`, or `T_<filtration><dim>`.
    pub fn suffix(&self) -> String {
        match self {
            SimilarityMeasure::Embedding => "E".to_string(),
            SimilarityMeasure::Topological => "T".to_string(),
            SimilarityMeasure::TopologicalSingle { filtration, dim } => format!("T_{}{dim}", filtration.name()),
        }
    }
}

/// Cached per-graph features a similarity measure may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphFeatures<'a> {
    pub diagrams: Option<&'a GraphDiagrams>,
    pub embedding: Option<&'a [f64]>,
}

pub fn topological_distance(a: &GraphDiagrams, b: &GraphDiagrams) -> Result<f64> {
    if a.per_filtration.len() != b.per_filtration.len() {
        return Err(Error::Shape("graphs featurised with different filtrations".into()));
    }
    let mut total = 0.0;
    for (fa, fb) in a.per_filtration.iter().zip(&b.per_filtration) {
        for q in 0..HOMOLOGY_DIMS {
            total += wasserstein_points(&fa.resolved(q), &fb.resolved(q), 1);
        }
    }
    Ok(total)
}

pub fn embedding_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "embeddings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

pub fn graph_similarity(a: &GraphFeatures, b: &GraphFeatures, measure: SimilarityMeasure) -> Result<f64> {
    let missing = |what: &str| {
        Error::State(format!(
            "no cached {what} for a graph; run `featurize` (and `train` for embeddings) first"
        ))
    };
    match measure {
        SimilarityMeasure::Topological => {
            let (da, db) = (
                a.diagrams.ok_or_else(|| missing("diagrams"))?,
                b.diagrams.ok_or_else(|| missing("diagrams"))?,
            );
            topological_distance(da, db)
        }
        SimilarityMeasure::TopologicalSingle { filtration, dim } => {
            let (da, db) = (
                a.diagrams.ok_or_else(|| missing("diagrams"))?,
                b.diagrams.ok_or_else(|| missing("diagrams"))?,
            );
            let pick = |d: &GraphDiagrams| {
                d.per_filtration
                    .iter()
                    .find(|f| f.kind == filtration)
                    .map(|f| f.resolved(dim as usize))
                    .ok_or_else(|| Error::Config(format!("filtration {} not featurised", filtration.name())))
            };
            if dim as usize >= HOMOLOGY_DIMS {
                return Err(Error::Config(format!("homology dimension {dim} not computed")));
            }
            Ok(wasserstein_points(&pick(da)?, &pick(db)?, 1))
        }
        SimilarityMeasure::Embedding => {
            let (ea, eb) = (
                a.embedding.ok_or_else(|| missing("embedding"))?,
                b.embedding.ok_or_else(|| missing("embedding"))?,
            );
            embedding_distance(ea, eb)
        }
    }
}
