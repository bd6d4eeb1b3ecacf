use serde::{Deserialize, Serialize};

use super::linalg::svd;
use super::{DenseTensor, Reconstruct};
use crate::error::{Error, Result};

/// Tensor train: cores of shape `R_{k-1} × D_k × R_k` with `R_0 = R_M = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtDecomp {
    pub cores: Vec<DenseTensor>,
}

/// How TT-SVD truncates each unfolding.
#[derive(Debug, Clone, PartialEq)]
pub enum TtTruncation {
    /// Keep every nonzero-rank direction.
    Exact,
    /// Cap the bond dimensions `(R_1, …, R_{M-1})`.
    MaxRanks(Vec<usize>),
    /// Relative Frobenius tolerance for the whole train.
    Tolerance(f64),
}

impl TtDecomp {
    pub fn shape(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// Bond dimensions `(R_1, …, R_{M-1})`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.shape()[2])
            .collect()
    }

    /// One entry via the chain of core slices.
    pub fn element(&self, idx: &[usize]) -> f64 {
        let mut row = vec![1.0];
        for (core, &i) in self.cores.iter().zip(idx) {
            let (rl, d, rr) = (core.shape()[0], core.shape()[1], core.shape()[2]);
            let c = core.data();
            let mut next = vec![0.0; rr];
            for (a, &ra) in row.iter().enumerate().take(rl) {
                let base = (a * d + i) * rr;
                for (b, nb) in next.iter_mut().enumerate() {
                    *nb += ra * c[base + b];
                }
            }
            row = next;
        }
        row[0]
    }
}

impl Reconstruct for TtDecomp {
    fn reconstruct(&self) -> DenseTensor {
        // left-to-right contraction: acc is (Π D_<k) × R_k
        let mut acc = DenseTensor::filled(&[1, 1], 1.0);
        for core in &self.cores {
            let (rl, d, rr) = (core.shape()[0], core.shape()[1], core.shape()[2]);
            let mat = core.clone().reshape(&[rl, d * rr]).expect("core shape");
            let prod = acc.matmul(&mat).expect("bond dims agree");
            let rows = prod.rows() * d;
            acc = prod.reshape(&[rows, rr]).expect("reshape");
        }
        acc.reshape(&self.shape()).expect("train shape")
    }
}

/// Sequential left-to-right SVD sweep.
pub fn tt_svd(t: &DenseTensor, trunc: &TtTruncation) -> Result<TtDecomp> {
    let shape = t.shape().to_vec();
    let m = shape.len();
    if let TtTruncation::MaxRanks(r) = trunc {
        if r.len() + 1 != m || r.contains(&0) {
            return Err(Error::Config(format!(
                "need {} positive TT ranks, got {r:?}",
                m.saturating_sub(1)
            )));
        }
    }
    let delta = match trunc {
        TtTruncation::Tolerance(eps) => eps / ((m.max(2) - 1) as f64).sqrt() * t.norm(),
        _ => 0.0,
    };
    let mut cores = Vec::with_capacity(m);
    let mut rest = t.clone();
    let mut r_prev = 1usize;
    for k in 0..m.saturating_sub(1) {
        let rows = r_prev * shape[k];
        let cols = rest.len() / rows;
        let mat = rest.reshape(&[rows, cols])?;
        let dec = svd(&mat);
        let full = dec.s.len();
        let mut r = match trunc {
            TtTruncation::Exact => full,
            TtTruncation::MaxRanks(caps) => caps[k].min(full),
            TtTruncation::Tolerance(_) => {
                let mut keep = full;
                let mut tail = 0.0;
                while keep > 1 && tail + dec.s[keep - 1].powi(2) <= delta * delta {
                    tail += dec.s[keep - 1].powi(2);
                    keep -= 1;
                }
                keep
            }
        };
        r = r.max(1);
        let u = DenseTensor::from_fn(&[rows, r], |i| dec.u.at(i[0], i[1]));
        cores.push(u.reshape(&[r_prev, shape[k], r])?);
        rest = DenseTensor::from_fn(&[r, cols], |i| dec.s[i[0]] * dec.vt.at(i[0], i[1]));
        r_prev = r;
    }
    cores.push(rest.reshape(&[r_prev, shape[m - 1], 1])?);
    Ok(TtDecomp { cores })
}
