use serde::{Deserialize, Serialize};

use super::linalg::leading_left_singular_vectors;
use super::{AlsOptions, DenseTensor, Reconstruct};
use crate::error::{Error, Result};

/// Tucker decomposition `𝒞 ×₁ U₁ ×₂ ⋯ ×_M U_M` with orthonormal factor columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerDecomp {
    pub core: DenseTensor,
    pub factors: Vec<DenseTensor>,
    /// Relative reconstruction error after each HOOI sweep (first entry is HOSVD).
    pub error_history: Vec<f64>,
}

impl Reconstruct for TuckerDecomp {
    fn reconstruct(&self) -> DenseTensor {
        let mut t = self.core.clone();
        for (m, u) in self.factors.iter().enumerate() {
            t = t.mode_product(m, u).expect("consistent Tucker shapes");
        }
        t
    }
}

fn project_all_but(t: &DenseTensor, factors: &[DenseTensor], skip: Option<usize>) -> Result<DenseTensor> {
    let mut y = t.clone();
    for (k, u) in factors.iter().enumerate() {
        if Some(k) != skip {
            y = y.mode_product(k, &u.transpose())?;
        }
    }
    Ok(y)
}

fn rel_error(xnorm: f64, core: &DenseTensor) -> f64 {
    if xnorm == 0.0 {
        return 0.0;
    }
    // orthonormal factors: ‖X‖² = ‖core‖² + ‖E‖²
    ((xnorm * xnorm - core.norm().powi(2)).max(0.0)).sqrt() / xnorm
}

/// HOSVD initialisation followed by higher-order orthogonal iteration.
pub fn tucker_hooi(t: &DenseTensor, ranks: &[usize], opts: AlsOptions) -> Result<TuckerDecomp> {
    if ranks.len() != t.order() {
        return Err(Error::Config(format!(
            "{} ranks for an order-{} tensor",
            ranks.len(),
            t.order()
        )));
    }
    for (m, (&r, &d)) in ranks.iter().zip(t.shape()).enumerate() {
        if r == 0 || r > d {
            return Err(Error::Config(format!("rank {r} invalid for mode {m} of size {d}")));
        }
    }
    let xnorm = t.norm();
    let mut factors = (0..t.order())
        .map(|m| Ok(leading_left_singular_vectors(&t.unfold(m)?, ranks[m])))
        .collect::<Result<Vec<_>>>()?;
    let mut core = project_all_but(t, &factors, None)?;
    let mut history = vec![rel_error(xnorm, &core)];
    for _ in 0..opts.max_iters {
        if history.last().copied().unwrap_or(0.0) < 1e-14 {
            break;
        }
        for m in 0..t.order() {
            let y = project_all_but(t, &factors, Some(m))?;
            factors[m] = leading_left_singular_vectors(&y.unfold(m)?, ranks[m]);
        }
        core = project_all_but(t, &factors, None)?;
        let err = rel_error(xnorm, &core);
        let prev = *history.last().expect("nonempty");
        history.push(err);
        if (prev - err).abs() < opts.tol {
            break;
        }
    }
    Ok(TuckerDecomp {
        core,
        factors,
        error_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factors_embed_core() {
        let core = DenseTensor::from_fn(&[2, 2], |i| (i[0] * 2 + i[1]) as f64 + 1.0);
        let d = TuckerDecomp {
            core: core.clone(),
            factors: vec![DenseTensor::eye(2), DenseTensor::eye(2)],
            error_history: vec![],
        };
        assert_eq!(d.reconstruct(), core);
    }

    #[test]
    fn rank_validation() {
        let t = DenseTensor::zeros(&[2, 3]);
        assert!(tucker_hooi(&t, &[3, 1], AlsOptions::default()).is_err());
        assert!(tucker_hooi(&t, &[1], AlsOptions::default()).is_err());
    }

    #[test]
    fn rank_one_exact() {
        let t = DenseTensor::outer(&[&[1.0, -2.0, 0.5], &[2.0, 1.0], &[1.0, 1.0, 3.0, -1.0]]);
        let d = tucker_hooi(&t, &[1, 1, 1], AlsOptions::default()).unwrap();
        assert!(d.reconstruct().sub(&t).unwrap().norm() / t.norm() <= 1e-8);
    }
}
