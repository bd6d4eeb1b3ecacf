use super::homology::PersistenceDiagram;

/// Minimum-cost perfect matching on a square cost matrix (row-major).
///
/// Shortest augmenting paths with vertex potentials, `O(n³)`. Returns the
/// column assigned to each row.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    // 1-based internals; column 0 is a virtual source
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[owner[j] - 1] = j - 1;
    }
    assign
}

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// `L∞` distance from a point to its orthogonal projection on the diagonal.
pub fn diagonal_distance(p: (f64, f64)) -> f64 {
    (p.1 - p.0).abs() / 2.0
}

/// `p`-Wasserstein distance between finite point multisets, each augmented with
/// the diagonal, using `L∞` ground distance. The arguments are put in a
/// canonical order first, so the result is exactly symmetric.
pub fn wasserstein_points(a: &[(f64, f64)], b: &[(f64, f64)], p: u32) -> f64 {
    let key = |x: &[(f64, f64)]| x.iter().flat_map(|&(u, v)| [u, v]).collect::<Vec<_>>();
    let order = a.len().cmp(&b.len()).then_with(|| {
        key(a)
            .iter()
            .zip(&key(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let (a, b) = if order.is_gt() { (b, a) } else { (a, b) };
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    if n == 0 {
        return 0.0;
    }
    let pw = |x: f64| x.powi(p as i32);
    // rows: a points then diagonal slots for b; columns: b points then diagonal slots for a
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = match (i < na, j < nb) {
                (true, true) => pw(linf(a[i], b[j])),
                (true, false) => pw(diagonal_distance(a[i])),
                (false, true) => pw(diagonal_distance(b[j])),
                (false, false) => 0.0,
            };
        }
    }
    let assign = min_cost_assignment(&cost, n);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    total.max(0.0).powf(1.0 / p as f64)
}

/// `d_{W_p}` between two diagrams with essential deaths set to `essential_death`.
pub fn wasserstein_distance(dg_a: &PersistenceDiagram, dg_b: &PersistenceDiagram, p: u32, essential_death: f64) -> f64 {
    wasserstein_points(&dg_a.resolved(essential_death), &dg_b.resolved(essential_death), p)
}
