mod common;

use common::brute_force_wasserstein;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topoconf_core::conformal::{
    conditional_prediction_set, conformal_pvalue, evaluate_sets, local_calibration_set, monte_carlo_coverage,
    prediction_set, CalibrationRecord, PredictionSet, ScoreGenerator,
};
use topoconf_core::filtration::FiltrationKind;
use topoconf_core::graph::Graph;
use topoconf_core::persistence::{compute_graph_diagrams, GraphDiagrams, GraphFeatures, SimilarityMeasure};

fn set_with(labels: Vec<usize>, k: usize) -> PredictionSet {
    PredictionSet {
        labels,
        p_values: vec![1.0; k],
        alpha: 0.1,
    }
}

#[test]
fn prediction_set_examples() {
    let calib: Vec<f64> = vec![0.01; 19];
    let s = prediction_set(&[0.995, 0.005], &calib, 0.1).unwrap();
    assert_eq!(s.labels, vec![0]);
    assert_eq!(s.p_values[1], 0.05);
    assert!(!s.contains(1));

    let all = prediction_set(&[0.99, 0.01], &calib, 0.04).unwrap();
    assert_eq!(all.labels, vec![0, 1]);

    // boundary: p = 0.1 exactly is included
    let nine: Vec<f64> = vec![0.2; 9];
    let b = prediction_set(&[0.0, 1.0], &nine, 0.1).unwrap();
    assert_eq!(b.p_values[0], 0.1);
    assert_eq!(b.labels, vec![0, 1]);
}

#[test]
fn m9_never_excludes_and_m19_excludes_above_all() {
    let nine: Vec<f64> = (0..9).map(|i| i as f64 / 20.0).collect();
    let s = prediction_set(&[0.0, 0.0, 1.0], &nine, 0.1).unwrap();
    assert_eq!(s.labels, vec![0, 1, 2]);
    let nineteen: Vec<f64> = (0..19).map(|i| i as f64 / 40.0).collect();
    let s = prediction_set(&[0.0, 1.0], &nineteen, 0.1).unwrap();
    assert_eq!(s.p_values[0], 0.05);
    assert_eq!(s.labels, vec![1]);
}

#[test]
fn evaluate_sets_examples() {
    let ones: Vec<PredictionSet> = (0..4).map(|y| set_with(vec![y % 2], 2)).collect();
    let m = evaluate_sets(ones.iter().zip([0, 1, 0, 1])).unwrap();
    assert_eq!((m.coverage, m.avg_size, m.sd_size), (1.0, 1.0, 0.0));

    let sets = [
        set_with(vec![0], 2),
        set_with(vec![0, 1], 2),
        set_with(vec![1], 2),
        set_with(vec![0, 1], 2),
    ];
    let m = evaluate_sets(sets.iter().zip([0, 1, 0, 0])).unwrap();
    assert_eq!(m.coverage, 0.75);
    assert_eq!(m.avg_size, 1.5);
    assert!((m.sd_size - 0.57735).abs() < 1e-5);
    assert!(evaluate_sets(std::iter::empty()).is_err());
}

fn fixture_graphs() -> Vec<Graph> {
    vec![
        Graph::from_edges(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap(),
        Graph::from_edges(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap(),
        Graph::from_edges(5, vec![(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap(),
        Graph::from_edges(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap(),
        Graph::from_edges(6, vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap(),
        Graph::from_edges(5, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]).unwrap(),
    ]
}

fn brute_topological(a: &GraphDiagrams, b: &GraphDiagrams) -> f64 {
    a.per_filtration
        .iter()
        .zip(&b.per_filtration)
        .map(|(fa, fb)| {
            (0..2)
                .map(|q| brute_force_wasserstein(&fa.resolved(q), &fb.resolved(q), 1))
                .sum::<f64>()
        })
        .sum()
}

#[test]
fn local_calibration_matches_brute_force_ranking() {
    let graphs = fixture_graphs();
    let diagrams: Vec<GraphDiagrams> = graphs
        .iter()
        .map(|g| compute_graph_diagrams(g, &FiltrationKind::ALL).unwrap())
        .collect();
    let target = GraphFeatures {
        diagrams: Some(&diagrams[5]),
        embedding: None,
    };
    let calib: Vec<CalibrationRecord> = (0..5)
        .map(|i| CalibrationRecord {
            index: i,
            score: 0.1 * i as f64,
            features: GraphFeatures {
                diagrams: Some(&diagrams[i]),
                embedding: None,
            },
        })
        .collect();
    let mut oracle: Vec<(f64, usize)> = (0..5)
        .map(|i| (brute_topological(&diagrams[5], &diagrams[i]), i))
        .collect();
    oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let got = local_calibration_set(&target, &calib, 3, SimilarityMeasure::Topological).unwrap();
    assert_eq!(got, oracle.iter().take(3).map(|o| o.1).collect::<Vec<_>>());

    // identical graph is its own nearest neighbour
    let self_target = GraphFeatures {
        diagrams: Some(&diagrams[2]),
        embedding: None,
    };
    assert_eq!(
        local_calibration_set(&self_target, &calib, 1, SimilarityMeasure::Topological).unwrap(),
        vec![2]
    );
    // clamping
    assert_eq!(
        local_calibration_set(&target, &calib, 50, SimilarityMeasure::Topological)
            .unwrap()
            .len(),
        5
    );
}

#[test]
fn missing_embedding_is_state_error() {
    let calib = [CalibrationRecord {
        index: 0,
        score: 0.2,
        features: GraphFeatures::default(),
    }];
    let r = local_calibration_set(&GraphFeatures::default(), &calib, 1, SimilarityMeasure::Embedding);
    assert!(matches!(r, Err(topoconf_core::Error::State(_))));
}

fn random_fixture(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let k = rng.random_range(2..6);
    let m = rng.random_range(1..40);
    let probs: Vec<f64> = {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let z: f64 = raw.iter().sum();
        raw.iter().map(|v| v / z).collect()
    };
    let emb: Vec<Vec<f64>> = (0..m).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
    let scores = (0..m).map(|_| rng.random()).collect();
    (probs, emb, scores)
}

#[test]
fn conditional_with_full_neighbourhood_is_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (probs, emb, scores) = random_fixture(&mut rng);
        let target_emb = [0.5, 0.5, 0.5];
        let calib: Vec<CalibrationRecord> = emb
            .iter()
            .zip(&scores)
            .enumerate()
            .map(|(i, (e, &s))| CalibrationRecord {
                index: i,
                score: s,
                features: GraphFeatures {
                    diagrams: None,
                    embedding: Some(e),
                },
            })
            .collect();
        let target = GraphFeatures {
            diagrams: None,
            embedding: Some(&target_emb),
        };
        let alpha = rng.random_range(0.01..0.99);
        let (cond, _) = conditional_prediction_set(
            &probs,
            &target,
            &calib,
            calib.len(),
            SimilarityMeasure::Embedding,
            alpha,
        )
        .unwrap();
        let marg = prediction_set(&probs, &scores, alpha).unwrap();
        assert_eq!(
            serde_json::to_string(&cond).unwrap(),
            serde_json::to_string(&marg).unwrap()
        );
    }
}

proptest! {
    #[test]
    fn sets_shrink_as_alpha_grows(
        probs in prop::collection::vec(0.0f64..1.0, 2..6),
        calib in prop::collection::vec(0.0f64..1.0, 1..30),
        a1 in 0.01f64..0.99,
        a2 in 0.01f64..0.99,
    ) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let big = prediction_set(&probs, &calib, lo).unwrap();
        let small = prediction_set(&probs, &calib, hi).unwrap();
        prop_assert!(small.labels.iter().all(|y| big.contains(*y)));
    }

    #[test]
    fn sets_are_nested_in_scores(
        probs in prop::collection::vec(0.0f64..1.0, 2..6),
        calib in prop::collection::vec(0.0f64..1.0, 1..30),
        alpha in 0.01f64..0.99,
    ) {
        let s = prediction_set(&probs, &calib, alpha).unwrap();
        for &y2 in &s.labels {
            for (y1, p) in probs.iter().enumerate() {
                if *p >= probs[y2] {
                    prop_assert!(s.contains(y1));
                }
            }
        }
    }

    #[test]
    fn no_exclusion_when_threshold_unreachable(
        probs in prop::collection::vec(0.0f64..1.0, 2..6),
        calib in prop::collection::vec(0.0f64..1.0, 1..30),
    ) {
        let alpha = 1.0 / (calib.len() as f64 + 1.0);
        prop_assert_eq!(prediction_set(&probs, &calib, alpha).unwrap().len(), probs.len());
    }

    #[test]
    fn pvalues_in_unit_interval(calib in prop::collection::vec(0.0f64..1.0, 1..30), s in 0.0f64..1.0) {
        let p = conformal_pvalue(&calib, s).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
    }
}

#[test]
fn pvalues_are_super_uniform() {
    let m = 19;
    let trials = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ps: Vec<f64> = (0..trials)
        .map(|_| {
            let calib: Vec<f64> = (0..m).map(|_| rng.random()).collect();
            conformal_pvalue(&calib, rng.random()).unwrap()
        })
        .collect();
    for i in 1..20 {
        let t = 0.05 * i as f64;
        let frac = ps.iter().filter(|&&p| p <= t).count() as f64 / trials as f64;
        // three binomial standard deviations of slack
        let slack = 3.0 * (t * (1.0 - t) / trials as f64).sqrt();
        assert!(frac <= t + 1.0 / (m as f64 + 1.0) + slack, "t={t}: {frac}");
    }
}

#[test]
fn monte_carlo_examples() {
    let r = monte_carlo_coverage(ScoreGenerator::Uniform, 19, 0.1, 10_000, 0).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.coverage >= 0.90 - r.half_width && r.coverage <= 0.95 + r.half_width);

    let r = monte_carlo_coverage(ScoreGenerator::Uniform, 9, 0.1, 2000, 1).unwrap();
    assert_eq!(r.coverage, 1.0);
    assert!(r.notes.iter().any(|n| n.contains("no exclusion possible")));

    let r = monte_carlo_coverage(ScoreGenerator::Uniform, 19, 0.5, 10_000, 2).unwrap();
    assert!(
        r.pass && r.coverage >= 0.5 - r.half_width && r.coverage <= 0.55 + r.half_width,
        "{r:?}"
    );

    let r = monte_carlo_coverage(ScoreGenerator::Softmax { classes: 4 }, 19, 0.1, 5000, 3).unwrap();
    assert!(r.pass, "{r:?}");

    let r = monte_carlo_coverage(ScoreGenerator::Constant { value: 0.5 }, 19, 0.1, 1000, 4).unwrap();
    assert!(r.tie_heavy && r.upper_bound.is_none());
    assert!(monte_carlo_coverage(ScoreGenerator::Uniform, 19, 0.1, 999, 0).is_err());
}

#[test]
fn monte_carlo_is_deterministic() {
    let a = monte_carlo_coverage(ScoreGenerator::Uniform, 19, 0.1, 2000, 77).unwrap();
    let b = monte_carlo_coverage(ScoreGenerator::Uniform, 19, 0.1, 2000, 77).unwrap();
    assert_eq!(a, b);
}
