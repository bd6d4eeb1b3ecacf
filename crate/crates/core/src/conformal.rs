//! Split conformal prediction: non-conformity scores, conformal p-values,
//! marginal and locally calibrated (conditional) prediction sets, and Monte
//! Carlo verification of the coverage guarantee.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::persistence::{graph_similarity, GraphFeatures, SimilarityMeasure};

/// `1 − probs[y]`.
pub fn nonconformity_score(probs: &[f64], y: usize) -> Result<f64> {
    probs
        .get(y)
        .map(|p| (1.0 - p).clamp(0.0, 1.0))
        .ok_or_else(|| Error::Shape(format!("label {y} out of range for {} classes", probs.len())))
}

/// `(#{j : s_j ≥ s} + 1) / (m + 1)`. Ties count towards the numerator.
pub fn conformal_pvalue(calib_scores: &[f64], s: f64) -> Result<f64> {
    if calib_scores.is_empty() {
        return Err(Error::State(
            "conformal p-value needs a nonempty calibration set".into(),
        ));
    }
    let count = calib_scores.iter().filter(|&&c| c >= s).count();
    Ok((count + 1) as f64 / (calib_scores.len() + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    /// Included labels in increasing order.
    pub labels: Vec<usize>,
    /// p-value of every candidate label.
    pub p_values: Vec<f64>,
    pub alpha: f64,
}

impl PredictionSet {
    pub fn contains(&self, y: usize) -> bool {
        self.labels.binary_search(&y).is_ok()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `{y : p^y ≥ α}` with `p^y` the p-value of `1 − probs[y]` against `calib_scores`.
pub fn prediction_set(probs: &[f64], calib_scores: &[f64], alpha: f64) -> Result<PredictionSet> {
    check_alpha(alpha)?;
    let p_values = (0..probs.len())
        .map(|y| conformal_pvalue(calib_scores, nonconformity_score(probs, y)?))
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..probs.len()).filter(|&y| p_values[y] >= alpha).collect();
    Ok(PredictionSet {
        labels,
        p_values,
        alpha,
    })
}

/// A calibration graph: its dataset index, true-label score and cached features.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationRecord<'a> {
    pub index: usize,
    pub score: f64,
    pub features: GraphFeatures<'a>,
}

/// Positions in `calib` of the `k_nn` records closest to the target, ordered by
/// distance with ties broken by lower graph index. `k_nn` is clamped to `|calib|`.
pub fn local_calibration_set(
    target: &GraphFeatures,
    calib: &[CalibrationRecord],
    k_nn: usize,
    measure: SimilarityMeasure,
) -> Result<Vec<usize>> {
    if calib.is_empty() {
        return Err(Error::State("empty calibration set".into()));
    }
    let mut dist = calib
        .iter()
        .enumerate()
        .map(|(pos, r)| Ok((graph_similarity(target, &r.features, measure)?, r.index, pos)))
        .collect::<Result<Vec<_>>>()?;
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(dist
        .into_iter()
        .take(k_nn.min(calib.len()))
        .map(|(_, _, pos)| pos)
        .collect())
}

/// Prediction set against the local calibration set; also returns the chosen
/// neighbour positions. With `k_nn ≥ |calib|` every record is selected and the
/// result equals the marginal set.
pub fn conditional_prediction_set(
    probs: &[f64],
    target: &GraphFeatures,
    calib: &[CalibrationRecord],
    k_nn: usize,
    measure: SimilarityMeasure,
    alpha: f64,
) -> Result<(PredictionSet, Vec<usize>)> {
    let local = local_calibration_set(target, calib, k_nn, measure)?;
    let scores: Vec<f64> = local.iter().map(|&p| calib[p].score).collect();
    Ok((prediction_set(probs, &scores, alpha)?, local))
}

/// Coverage and set-size summary over a test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub n: usize,
    pub coverage: f64,
    pub avg_size: f64,
    /// Sample standard deviation of the set sizes.
    pub sd_size: f64,
}

pub fn evaluate_sets<'a>(results: impl IntoIterator<Item = (&'a PredictionSet, usize)>) -> Result<SetMetrics> {
    let (mut n, mut covered) = (0usize, 0usize);
    let mut sizes = Vec::new();
    for (set, y) in results {
        n += 1;
        covered += usize::from(set.contains(y));
        sizes.push(set.len() as f64);
    }
    if n == 0 {
        return Err(Error::State("no test results to evaluate".into()));
    }
    let mean = sizes.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SetMetrics {
        n,
        coverage: covered as f64 / n as f64,
        avg_size: mean,
        sd_size: sd,
    })
}

/// Exact (Clopper-Pearson) two-sided binomial confidence interval.
pub fn clopper_pearson(successes: usize, trials: usize, level: f64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let a = (1.0 - level) / 2.0;
    let (x, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).expect("positive shape").inverse_cdf(a)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).expect("positive shape").inverse_cdf(1.0 - a)
    };
    (lo, hi)
}

/// Source of exchangeable (score, label) data for Monte Carlo checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreGenerator {
    /// True-label scores are i.i.d. uniform on (0, 1).
    Uniform,
    /// Softmax of standard normal logits over `classes` labels with the label
    /// drawn from those probabilities; the full prediction set is formed.
    Softmax { classes: usize },
    /// Every score equals `value`; a degenerate, tie-only regime.
    Constant { value: f64 },
}

impl ScoreGenerator {
    fn draw(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
        match *self {
            ScoreGenerator::Uniform => {
                let s: f64 = rng.random();
                (vec![1.0 - s], 0)
            }
            ScoreGenerator::Constant { value } => (vec![1.0 - value], 0),
            ScoreGenerator::Softmax { classes } => {
                let logits: Vec<f64> = (0..classes).map(|_| StandardNormal.sample(rng)).collect();
                let probs = crate::autodiff::softmax_rows(&logits, classes);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut y = classes - 1;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        y = k;
                        break;
                    }
                }
                (probs, y)
            }
        }
    }

    fn continuous(&self) -> bool {
        !matches!(self, ScoreGenerator::Constant { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub calib_size: usize,
    pub trials: usize,
    pub coverage: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Half the width of the 95% Clopper-Pearson interval.
    pub half_width: f64,
    pub lower_bound: f64,
    /// `None` when ties make the upper bound inapplicable.
    pub upper_bound: Option<f64>,
    pub avg_size: f64,
    pub tie_heavy: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Repeatedly draws `m` calibration points and one test point, forms the
/// prediction set and records whether it covers the test label. Trial `t` uses
/// stream `t` of a ChaCha8 generator seeded with `seed`.
pub fn monte_carlo_coverage(
    generator: ScoreGenerator,
    m: usize,
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(Error::Config("calibration size must be positive".into()));
    }
    if trials < 1000 {
        return Err(Error::Config(format!(
            "at least 1000 trials are required, got {trials}"
        )));
    }
    let outcomes: Vec<(bool, usize, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let calib: Vec<f64> = (0..m)
                .map(|_| {
                    let (p, y) = generator.draw(&mut rng);
                    1.0 - p[y]
                })
                .collect();
            let (probs, y) = generator.draw(&mut rng);
            let set = prediction_set(&probs, &calib, alpha).expect("validated inputs");
            let s = 1.0 - probs[y];
            let tie = calib.contains(&s);
            (set.contains(y), set.len(), tie)
        })
        .collect();
    let covered = outcomes.iter().filter(|o| o.0).count();
    let ties = outcomes.iter().filter(|o| o.2).count();
    let coverage = covered as f64 / trials as f64;
    let avg_size = outcomes.iter().map(|o| o.1 as f64).sum::<f64>() / trials as f64;
    let (ci_low, ci_high) = clopper_pearson(covered, trials, 0.95);
    let half_width = (ci_high - ci_low) / 2.0;
    let tie_heavy = !generator.continuous() || ties * 100 > trials;
    let mut notes = Vec::new();
    if tie_heavy {
        log::warn!("{ties} of {trials} trials had tied scores; upper coverage bound not checked");
        notes.push("tie-heavy regime: scores are not continuous, upper bound not checked".to_string());
    }
    if (m as f64 + 1.0) * alpha <= 1.0 {
        notes.push("no exclusion possible: (m + 1)·alpha ≤ 1, every label is always included".to_string());
    }
    let lower_bound = 1.0 - alpha;
    let upper_bound = (!tie_heavy).then(|| 1.0 - alpha + 1.0 / (m as f64 + 1.0));
    let pass = coverage >= lower_bound - half_width && upper_bound.is_none_or(|u| coverage <= u + half_width);
    Ok(CoverageReport {
        alpha,
        calib_size: m,
        trials,
        coverage,
        ci_low,
        ci_high,
        half_width,
        lower_bound,
        upper_bound,
        avg_size,
        tie_heavy,
        pass,
        notes,
    })
}
