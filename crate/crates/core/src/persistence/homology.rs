use serde::{Deserialize, Serialize};

use super::complex::FilteredComplex;

/// A `(birth, death)` pair; `death == None` marks an essential class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePoint {
    pub birth: f64,
    pub death: Option<f64>,
}

impl PersistencePoint {
    pub fn finite(birth: f64, death: f64) -> Self {
        Self {
            birth,
            death: Some(death),
        }
    }

    pub fn essential(birth: f64) -> Self {
        Self { birth, death: None }
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_none()
    }

    /// `(birth, death)` with essential deaths replaced by `essential_death`.
    pub fn resolved(&self, essential_death: f64) -> (f64, f64) {
        (self.birth, self.death.unwrap_or(essential_death))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub dim: u8,
    pub points: Vec<PersistencePoint>,
}

impl PersistenceDiagram {
    pub fn new(dim: u8, points: Vec<PersistencePoint>) -> Self {
        Self { dim, points }
    }

    pub fn empty(dim: u8) -> Self {
        Self::new(dim, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points alive at threshold `t`, i.e. `birth ≤ t < death`.
    pub fn alive_at(&self, t: f64) -> usize {
        self.points
            .iter()
            .filter(|p| p.birth <= t && p.death.is_none_or(|d| t < d))
            .count()
    }

    /// Finite `(birth, death)` pairs with essential deaths substituted.
    pub fn resolved(&self, essential_death: f64) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| p.resolved(essential_death)).collect()
    }

    /// Multiset union.
    pub fn union(&self, other: &Self) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Self::new(self.dim, points)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }
}

/// 0- and 1-dimensional diagrams of a filtered graph in one union-find pass.
///
/// Components follow the elder rule: the root with the later birth dies, and
/// on equal births the root with the larger vertex id dies. Zero-persistence
/// pairs are dropped. Every cycle-closing edge births an essential H1 class.
pub fn persistence_diagrams(fc: &FilteredComplex) -> (PersistenceDiagram, PersistenceDiagram) {
    let n = fc.vertex_count();
    let mut uf = UnionFind::new(n);
    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    for s in &fc.stream {
        if s.dim == 0 {
            continue;
        }
        let (u, v) = fc.edges[s.id];
        let (ru, rv) = (uf.find(u), uf.find(v));
        if ru == rv {
            h1.push(PersistencePoint::essential(s.value));
            continue;
        }
        let older = |a: usize, b: usize| {
            let (ba, bb) = (fc.vertex_values[a], fc.vertex_values[b]);
            ba < bb || (ba == bb && a < b)
        };
        let (elder, younger) = if older(ru, rv) { (ru, rv) } else { (rv, ru) };
        let birth = fc.vertex_values[younger];
        if s.value > birth {
            h0.push(PersistencePoint::finite(birth, s.value));
        }
        uf.parent[younger] = elder;
    }
    let mut components = 0;
    for v in 0..n {
        if uf.find(v) == v {
            components += 1;
            h0.push(PersistencePoint::essential(fc.vertex_values[v]));
        }
    }
    debug_assert_eq!(h1.len() + n, fc.edges.len() + components);
    (PersistenceDiagram::new(0, h0), PersistenceDiagram::new(1, h1))
}

pub fn compute_ph0(fc: &FilteredComplex) -> PersistenceDiagram {
    persistence_diagrams(fc).0
}

pub fn compute_ph1(fc: &FilteredComplex) -> PersistenceDiagram {
    persistence_diagrams(fc).1
}
