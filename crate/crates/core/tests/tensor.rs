use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topoconf_core::tensor::{cp_als, tt_svd, tucker_hooi, AlsOptions, DenseTensor, Reconstruct, TtTruncation};

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseTensor {
    DenseTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn rel_error(a: &DenseTensor, b: &DenseTensor) -> f64 {
    a.sub(b).unwrap().norm() / a.norm()
}

fn non_increasing(history: &[f64]) -> bool {
    history.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

#[test]
fn full_rank_tucker_and_tt_reconstruct() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let t = random_tensor(&mut rng, &[4, 3, 5]);
        let tucker = tucker_hooi(&t, &[4, 3, 5], AlsOptions::default()).unwrap();
        assert!(rel_error(&t, &tucker.reconstruct()) <= 1e-10);
        let tt = tt_svd(&t, &TtTruncation::Exact).unwrap();
        assert!(rel_error(&t, &tt.reconstruct()) <= 1e-10);
    }
}

#[test]
fn cp_recovers_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let vs: Vec<Vec<f64>> = [4, 3, 5]
            .iter()
            .map(|&d| (0..d).map(|_| rng.random_range(0.5..2.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
        let t = DenseTensor::outer(&refs);
        let cp = cp_als(&t, 1, AlsOptions::default()).unwrap();
        assert!(rel_error(&t, &cp.reconstruct()) <= 1e-8);
    }
}

#[test]
fn als_and_hooi_fits_never_get_worse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let t = random_tensor(&mut rng, &[5, 4, 6]);
        let cp = cp_als(
            &t,
            3,
            AlsOptions {
                max_iters: 50,
                tol: 0.0,
            },
        )
        .unwrap();
        assert!(non_increasing(&cp.error_history), "{:?}", cp.error_history);
        let tucker = tucker_hooi(
            &t,
            &[2, 2, 3],
            AlsOptions {
                max_iters: 20,
                tol: 0.0,
            },
        )
        .unwrap();
        assert!(non_increasing(&tucker.error_history), "{:?}", tucker.error_history);
    }
}

#[test]
fn cp_weights_are_sorted_by_magnitude() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = random_tensor(&mut rng, &[4, 4, 4]);
    let cp = cp_als(&t, 4, AlsOptions::default()).unwrap();
    assert!(cp.weights.windows(2).all(|w| w[0].abs() >= w[1].abs()));
    assert_eq!(cp, cp_als(&t, 4, AlsOptions::default()).unwrap());
}

#[test]
fn truncated_tucker_energy_splits() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let t = random_tensor(&mut rng, &[5, 4, 6]);
        let d = tucker_hooi(&t, &[3, 2, 3], AlsOptions::default()).unwrap();
        for (u, r) in d.factors.iter().zip([3, 2, 3]) {
            let gram = u.transpose().matmul(u).unwrap();
            let eye = DenseTensor::eye(r);
            assert!(gram.sub(&eye).unwrap().norm() <= 1e-10);
        }
        let resid = t.sub(&d.reconstruct()).unwrap().norm();
        let lhs = t.norm().powi(2);
        let rhs = d.core.norm().powi(2) + resid.powi(2);
        assert!((lhs - rhs).abs() <= 1e-6 * lhs.max(1.0));
    }
}

#[test]
fn tt_elements_are_chain_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for shape in [vec![4, 4, 4], vec![2, 3, 2, 5], vec![8, 8]] {
        let t = random_tensor(&mut rng, &shape);
        let tt = tt_svd(&t, &TtTruncation::MaxRanks(vec![2; shape.len() - 1])).unwrap();
        let full = tt.reconstruct();
        let mut idx = vec![0; shape.len()];
        for _ in 0..t.len() {
            // explicit left-to-right product of core slices
            let mut row = vec![1.0];
            for (core, &i) in tt.cores.iter().zip(&idx) {
                let (rl, rr) = (core.shape()[0], core.shape()[2]);
                row = (0..rr)
                    .map(|b| (0..rl).map(|a| row[a] * core.get(&[a, i, b])).sum())
                    .collect();
            }
            assert!((row[0] - full.get(&idx)).abs() <= 1e-12);
            assert!((tt.element(&idx) - row[0]).abs() <= 1e-12);
            topoconf_core::tensor::increment(&mut idx, &shape);
        }
    }
}
