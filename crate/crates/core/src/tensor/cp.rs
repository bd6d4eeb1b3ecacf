use serde::{Deserialize, Serialize};

use super::linalg::{leading_left_singular_vectors, solve_right_spd};
use super::{DenseTensor, Reconstruct};
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;

/// Rank-`R` CP decomposition `Σ_r c_r u_{1r} ∘ ⋯ ∘ u_{Mr}` with unit-norm factor columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpDecomp {
    pub weights: Vec<f64>,
    /// One `D_m × R` loading matrix per mode.
    pub factors: Vec<DenseTensor>,
    /// Relative reconstruction error after each sweep.
    pub error_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct AlsOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-8,
        }
    }
}

impl CpDecomp {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.rows()).collect()
    }
}

impl Reconstruct for CpDecomp {
    fn reconstruct(&self) -> DenseTensor {
        let shape = self.shape();
        let r = self.rank();
        let kr = khatri_rao(&self.factors);
        let data = (0..kr.rows())
            .map(|row| (0..r).map(|c| self.weights[c] * kr.at(row, c)).sum())
            .collect();
        DenseTensor::new(shape, data).expect("consistent CP shape")
    }
}

/// Khatri-Rao product of `D_k × R` matrices; rows run over the multi-index
/// `(i_1, …, i_K)` in row-major order.
pub fn khatri_rao(mats: &[DenseTensor]) -> DenseTensor {
    let r = mats[0].cols();
    let mut acc = DenseTensor::filled(&[1, r], 1.0);
    for m in mats {
        let (rows_a, d) = (acc.rows(), m.rows());
        let mut next = DenseTensor::zeros(&[rows_a * d, r]);
        let out = next.data_mut();
        for a in 0..rows_a {
            for i in 0..d {
                let row = (a * d + i) * r;
                for c in 0..r {
                    out[row + c] = acc.at(a, c) * m.at(i, c);
                }
            }
        }
        acc = next;
    }
    acc
}

/// Deterministic starting loading matrix: leading left singular vectors of the
/// mode unfolding, followed by fixed trigonometric columns once those run out.
fn init_factor(t: &DenseTensor, mode: usize, rank: usize) -> Result<DenseTensor> {
    let unf = t.unfold(mode)?;
    let d = unf.rows();
    let avail = d.min(unf.cols());
    let lead = leading_left_singular_vectors(&unf, rank.min(avail));
    let mut out = DenseTensor::zeros(&[d, rank]);
    for c in 0..rank {
        let col: Vec<f64> = if c < avail {
            (0..d).map(|i| lead.at(i, c)).collect()
        } else {
            let phase = 0.618_033_988_749_894_9 * (c + 1) as f64 + 0.25 * mode as f64;
            (0..d)
                .map(|i| (std::f64::consts::PI * phase * (i + 1) as f64).sin() + 0.1)
                .collect()
        };
        let nrm = col.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for (i, v) in col.iter().enumerate() {
            out.set(&[i, c], v / nrm);
        }
    }
    Ok(out)
}

fn normalize_columns(u: &mut DenseTensor) -> Vec<f64> {
    let (d, r) = (u.rows(), u.cols());
    let mut norms = vec![0.0; r];
    for c in 0..r {
        norms[c] = (0..d).map(|i| u.at(i, c).powi(2)).sum::<f64>().sqrt();
        if norms[c] > 0.0 {
            for i in 0..d {
                let v = u.at(i, c) / norms[c];
                u.set(&[i, c], v);
            }
        }
    }
    norms
}

/// CP decomposition by alternating least squares.
pub fn cp_als(t: &DenseTensor, rank: usize, opts: AlsOptions) -> Result<CpDecomp> {
    if rank == 0 {
        return Err(Error::Config("CP rank must be at least 1".into()));
    }
    let m = t.order();
    let xnorm = t.norm();
    let mut factors = (0..m).map(|k| init_factor(t, k, rank)).collect::<Result<Vec<_>>>()?;
    if xnorm == 0.0 {
        return Ok(CpDecomp {
            weights: vec![0.0; rank],
            factors,
            error_history: vec![0.0],
        });
    }
    let unfoldings = (0..m).map(|k| t.unfold(k)).collect::<Result<Vec<_>>>()?;
    let mut weights = vec![1.0; rank];
    let mut history: Vec<f64> = Vec::new();
    for _ in 0..opts.max_iters {
        for mode in 0..m {
            let others: Vec<DenseTensor> = (0..m).filter(|&k| k != mode).map(|k| factors[k].clone()).collect();
            let mut gram = DenseTensor::filled(&[rank, rank], 1.0);
            for f in &others {
                let g = f.transpose().matmul(f)?;
                gram.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a *= b);
            }
            let mttkrp = if others.is_empty() {
                unfoldings[mode].clone()
            } else {
                unfoldings[mode].matmul(&khatri_rao(&others))?
            };
            let mut u = solve_right_spd(&mttkrp, &gram, RIDGE);
            weights = normalize_columns(&mut u);
            factors[mode] = u;
        }
        let current = CpDecomp {
            weights: weights.clone(),
            factors: factors.clone(),
            error_history: Vec::new(),
        };
        let err = current.reconstruct().sub(t)?.norm() / xnorm;
        let done = history.last().is_some_and(|&prev| (prev - err).abs() < opts.tol);
        history.push(err);
        if done || err < 1e-14 {
            break;
        }
    }
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    let weights = order.iter().map(|&i| weights[i]).collect();
    let factors = factors
        .iter()
        .map(|f| DenseTensor::from_fn(&[f.rows(), rank], |ix| f.at(ix[0], order[ix[1]])))
        .collect();
    Ok(CpDecomp {
        weights,
        factors,
        error_history: history,
    })
}
