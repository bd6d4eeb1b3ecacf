use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::homology::PersistenceDiagram;
use crate::error::{Error, Result};

/// Rectangle of the birth–persistence plane covered by an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub birth_min: f64,
    pub birth_max: f64,
    pub pers_min: f64,
    pub pers_max: f64,
}

impl GridRange {
    pub fn new(birth_min: f64, birth_max: f64, pers_min: f64, pers_max: f64) -> Self {
        Self {
            birth_min,
            birth_max,
            pers_min,
            pers_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        if !ok(self.birth_min, self.birth_max) || !ok(self.pers_min, self.pers_max) {
            return Err(Error::Config(format!("degenerate persistence-image grid {self:?}")));
        }
        if self.pers_max <= 0.0 {
            return Err(Error::Config(
                "persistence-image grid must reach positive persistence".into(),
            ));
        }
        Ok(())
    }

    /// Smallest range containing the points, padded by `pad` of its span on
    /// every side. Empty or zero-span axes fall back to a unit-width window.
    pub fn fit(points: impl IntoIterator<Item = (f64, f64)>, pad: f64) -> Self {
        let (mut b0, mut b1, mut p0, mut p1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (birth, death) in points {
            let pers = death - birth;
            b0 = b0.min(birth);
            b1 = b1.max(birth);
            p0 = p0.min(pers);
            p1 = p1.max(pers);
        }
        let axis = |lo: f64, hi: f64| -> (f64, f64) {
            if !lo.is_finite() {
                return (0.0, 1.0);
            }
            let span = hi - lo;
            if span <= 0.0 {
                return (lo - 0.5, hi + 0.5);
            }
            (lo - pad * span, hi + pad * span)
        };
        let (birth_min, birth_max) = axis(b0, b1);
        let (pers_min, mut pers_max) = axis(p0, p1);
        if pers_max <= 0.0 {
            pers_max = 1.0;
        }
        Self::new(birth_min, birth_max, pers_min, pers_max)
    }

    /// Bandwidths proportional to the side lengths.
    pub fn bandwidth(&self, factor: f64) -> (f64, f64) {
        (
            factor * (self.birth_max - self.birth_min),
            factor * (self.pers_max - self.pers_min),
        )
    }
}

/// Rasterisation settings for one persistence image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageParams {
    pub resolution: usize,
    pub range: GridRange,
    /// Gaussian standard deviations `(δ_x, δ_y)`.
    pub bandwidth: (f64, f64),
}

/// `P × P` raster; row `r` covers the `r`-th persistence bin from `pers_min`
/// upwards, column `c` the `c`-th birth bin from `birth_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceImage {
    pub params: ImageParams,
    pub pixels: Vec<f64>,
}

impl PersistenceImage {
    pub fn resolution(&self) -> usize {
        self.params.resolution
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.params.resolution + col]
    }

    pub fn total_mass(&self) -> f64 {
        self.pixels.iter().sum()
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Integrals of `N(mu, sd²)` over the `bins` consecutive cells of `[lo, hi]`.
fn cell_masses(lo: f64, hi: f64, bins: usize, mu: f64, sd: f64) -> Vec<f64> {
    let h = (hi - lo) / bins as f64;
    let cdf: Vec<f64> = (0..=bins)
        .map(|i| std_normal_cdf((lo + i as f64 * h - mu) / sd))
        .collect();
    cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
}

/// Linear weight in persistence, normalised by the grid's upper persistence bound.
pub fn persistence_weight(persistence: f64, range: &GridRange) -> f64 {
    (persistence / range.pers_max).max(0.0)
}

/// Persistence image of `dg` with essential deaths set to `essential_death`.
///
/// Each point maps to `(birth, death − birth)` and contributes a Gaussian with
/// mass `g(μ)`; every pixel is the exact integral over its box, computed as a
/// product of one-dimensional normal CDF differences.
pub fn rasterize_persistence_image(
    dg: &PersistenceDiagram,
    params: &ImageParams,
    essential_death: f64,
) -> Result<PersistenceImage> {
    let p = params.resolution;
    if p == 0 {
        return Err(Error::Config("persistence-image resolution must be ≥ 1".into()));
    }
    let (dx, dy) = params.bandwidth;
    if !(dx > 0.0 && dy > 0.0) {
        return Err(Error::Config(format!("bandwidths must be positive: {dx}, {dy}")));
    }
    let r = params.range;
    r.validate()?;
    let mut pixels = vec![0.0; p * p];
    for pt in &dg.points {
        let (birth, death) = pt.resolved(essential_death);
        let pers = death - birth;
        let w = persistence_weight(pers, &r);
        if w == 0.0 {
            continue;
        }
        let mx = cell_masses(r.birth_min, r.birth_max, p, birth, dx);
        let my = cell_masses(r.pers_min, r.pers_max, p, pers, dy);
        for (row, &wy) in my.iter().enumerate() {
            if wy == 0.0 {
                continue;
            }
            let out = &mut pixels[row * p..(row + 1) * p];
            for (px, &wx) in out.iter_mut().zip(&mx) {
                *px += w * wx * wy;
            }
        }
    }
    Ok(PersistenceImage {
        params: *params,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persistence::homology::PersistencePoint;

    fn unit_params(p: usize, d: f64) -> ImageParams {
        ImageParams {
            resolution: p,
            range: GridRange::new(0.0, 1.0, 0.0, 1.0),
            bandwidth: (d, d),
        }
    }

    #[test]
    fn empty_and_zero_persistence() {
        let params = unit_params(4, 0.1);
        let e = rasterize_persistence_image(&PersistenceDiagram::empty(0), &params, 1.0).unwrap();
        assert!(e.pixels.iter().all(|&x| x == 0.0));
        let z = PersistenceDiagram::new(1, vec![PersistencePoint::essential(0.7)]);
        let img = rasterize_persistence_image(&z, &params, 0.7).unwrap();
        assert!(img.pixels.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn degenerate_range_rejected() {
        let mut params = unit_params(2, 0.1);
        params.range.birth_max = 0.0;
        assert!(rasterize_persistence_image(&PersistenceDiagram::empty(0), &params, 1.0).is_err());
        let bad_bw = ImageParams {
            bandwidth: (0.0, 0.1),
            ..unit_params(2, 0.1)
        };
        assert!(rasterize_persistence_image(&PersistenceDiagram::empty(0), &bad_bw, 1.0).is_err());
    }

    #[test]
    fn symmetric_point_splits_evenly() {
        // (b, d) = (0.5, 1.0) maps to (0.5, 0.5), the grid centre
        let dg = PersistenceDiagram::new(0, vec![PersistencePoint::finite(0.5, 1.0)]);
        let img = rasterize_persistence_image(&dg, &unit_params(2, 0.2), 1.0).unwrap();
        let v = img.pixels[0];
        assert!(img.pixels.iter().all(|&x| (x - v).abs() < 1e-15));
        let inner = 1.0 - 2.0 * std_normal_cdf(-2.5);
        assert!((img.total_mass() - 0.5 * inner * inner).abs() < 1e-12);
    }

    #[test]
    fn fit_pads_and_handles_empty() {
        let g = GridRange::fit([(0.0, 1.0), (1.0, 3.0)], 0.05);
        assert!((g.birth_min + 0.05).abs() < 1e-12 && (g.birth_max - 1.05).abs() < 1e-12);
        assert!((g.pers_min - 0.95).abs() < 1e-12 && (g.pers_max - 2.05).abs() < 1e-12);
        assert_eq!(GridRange::fit([], 0.05), GridRange::new(0.0, 1.0, 0.0, 1.0));
        let one = GridRange::fit([(2.0, 2.0)], 0.05);
        assert!(one.validate().is_ok());
    }
}
