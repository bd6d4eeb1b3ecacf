use crate::error::{Error, Result};
use crate::filtration::FiltrationValues;
use crate::graph::Graph;

/// A vertex (`dim == 0`) or edge (`dim == 1`) entering the filtration at `value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simplex {
    pub value: f64,
    pub dim: u8,
    pub id: usize,
}

/// Sublevel filtration of a graph's 1-skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredComplex {
    pub vertex_values: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
    pub edge_values: Vec<f64>,
    /// Ascending by `(value, dim, id)`; vertices precede edges on ties.
    pub stream: Vec<Simplex>,
}

impl FilteredComplex {
    pub fn vertex_count(&self) -> usize {
        self.vertex_values.len()
    }

    pub fn max_value(&self) -> f64 {
        self.vertex_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Edge values are the max of their endpoint values.
pub fn build_sublevel_filtration(g: &Graph, f: &FiltrationValues) -> Result<FilteredComplex> {
    build_from_values(g, &f.values)
}

pub fn build_from_values(g: &Graph, values: &[f64]) -> Result<FilteredComplex> {
    if values.len() != g.node_count() {
        return Err(Error::Shape(format!(
            "{} filtration values for {} nodes",
            values.len(),
            g.node_count()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("filtration values must be finite".into()));
    }
    let edges = g.edges().to_vec();
    let edge_values: Vec<f64> = edges.iter().map(|&(u, v)| values[u].max(values[v])).collect();
    let mut stream: Vec<Simplex> = values
        .iter()
        .enumerate()
        .map(|(id, &value)| Simplex { value, dim: 0, id })
        .chain(
            edge_values
                .iter()
                .enumerate()
                .map(|(id, &value)| Simplex { value, dim: 1, id }),
        )
        .collect();
    stream.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then(a.dim.cmp(&b.dim))
            .then(a.id.cmp(&b.id))
    });
    Ok(FilteredComplex {
        vertex_values: values.to_vec(),
        edges,
        edge_values,
        stream,
    })
}
