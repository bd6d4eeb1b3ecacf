//! Thin wrappers over nalgebra with the conventions the decompositions rely on.

use nalgebra::DMatrix;

use super::DenseTensor;

pub(crate) fn to_na(m: &DenseTensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> DenseTensor {
    let (r, c) = m.shape();
    DenseTensor::from_fn(&[r, c], |i| m[(i[0], i[1])])
}

/// Thin SVD `A = U diag(s) Vᵀ` with singular values in descending order and a
/// fixed sign: the largest-magnitude entry of every left singular vector is
/// positive.
pub struct Svd {
    pub u: DenseTensor,
    pub s: Vec<f64>,
    pub vt: DenseTensor,
}

pub fn svd(a: &DenseTensor) -> Svd {
    let (m, n) = (a.rows(), a.cols());
    let k = m.min(n);
    let dec = to_na(a).svd(true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..k).collect();
    // stable sort keeps ties in backend order, which is itself deterministic
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));

    let mut uo = DenseTensor::zeros(&[m, k]);
    let mut vo = DenseTensor::zeros(&[k, n]);
    let mut s = Vec::with_capacity(k);
    for (col, &src) in order.iter().enumerate() {
        s.push(dec.singular_values[src]);
        let mut pivot = 0;
        for i in 0..m {
            if u[(i, src)].abs() > u[(pivot, src)].abs() {
                pivot = i;
            }
        }
        let sign = if u[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            uo.set(&[i, col], sign * u[(i, src)]);
        }
        for j in 0..n {
            vo.set(&[col, j], sign * vt[(src, j)]);
        }
    }
    Svd { u: uo, s, vt: vo }
}

/// First `r` left singular vectors as a `rows × r` matrix. Pads with
/// zero-extended identity columns if `r` exceeds the rank bound of `a`.
pub fn leading_left_singular_vectors(a: &DenseTensor, r: usize) -> DenseTensor {
    let dec = svd(a);
    let m = a.rows();
    let avail = dec.s.len();
    let mut out = DenseTensor::zeros(&[m, r]);
    for col in 0..r.min(avail) {
        for i in 0..m {
            out.set(&[i, col], dec.u.at(i, col));
        }
    }
    if r > avail {
        // complete to an orthonormal basis with Gram-Schmidt over unit vectors
        let mut filled = avail;
        for e in 0..m {
            if filled == r {
                break;
            }
            let mut v = vec![0.0; m];
            v[e] = 1.0;
            for col in 0..filled {
                let d: f64 = (0..m).map(|i| out.at(i, col) * v[i]).sum();
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi -= d * out.at(i, col);
                }
            }
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 1e-8 {
                for (i, vi) in v.iter().enumerate() {
                    out.set(&[i, filled], vi / nrm);
                }
                filled += 1;
            }
        }
    }
    out
}

/// Solves `X · G = B` for `X` where `G` is symmetric positive semidefinite,
/// falling back to `G + ridge · I` when `G` is singular or badly conditioned.
pub fn solve_right_spd(b: &DenseTensor, g: &DenseTensor, ridge: f64) -> DenseTensor {
    let n = g.rows();
    // X G = B  <=>  G Xᵀ = Bᵀ
    let bt = to_na(b).transpose();
    let gm = to_na(g);
    if let Some(ch) = gm.clone().cholesky() {
        let diag = ch.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if hi > 0.0 && (lo / hi).powi(2) > 1e-12 {
            return from_na(&ch.solve(&bt).transpose());
        }
    }
    let mut gr = gm;
    for i in 0..n {
        gr[(i, i)] += ridge;
    }
    let xt = match gr.clone().cholesky() {
        Some(ch) => ch.solve(&bt),
        None => gr
            .lu()
            .solve(&bt)
            .unwrap_or_else(|| DMatrix::zeros(bt.nrows(), bt.ncols())),
    };
    from_na(&xt.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs_and_is_sorted() {
        let a = DenseTensor::from_fn(&[4, 3], |i| ((i[0] * 7 + i[1] * 3) % 5) as f64 - 1.5);
        let d = svd(&a);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let mut us = d.u.clone();
        for i in 0..us.rows() {
            for j in 0..us.cols() {
                let v = us.at(i, j) * d.s[j];
                us.set(&[i, j], v);
            }
        }
        let rec = us.matmul(&d.vt).unwrap();
        assert!(rec.sub(&a).unwrap().norm() < 1e-12);
        for j in 0..d.u.cols() {
            let col: Vec<f64> = (0..d.u.rows()).map(|i| d.u.at(i, j)).collect();
            let piv = col
                .iter()
                .cloned()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(piv > 0.0);
        }
    }

    #[test]
    fn svd_is_repeatable() {
        let a = DenseTensor::from_fn(&[5, 6], |i| ((i[0] + 2 * i[1]) as f64).sin());
        let d1 = svd(&a);
        let d2 = svd(&a);
        assert_eq!(d1.u, d2.u);
        assert_eq!(d1.s, d2.s);
    }

    #[test]
    fn padded_basis_is_orthonormal() {
        let a = DenseTensor::from_rows(&[vec![1.0], vec![1.0], vec![0.0]]).unwrap();
        let u = leading_left_singular_vectors(&a, 3);
        let g = u.transpose().matmul(&u).unwrap();
        assert!(g.sub(&DenseTensor::eye(3)).unwrap().norm() < 1e-12);
    }

    #[test]
    fn ridge_solve_handles_singular_gram() {
        let g = DenseTensor::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let b = DenseTensor::from_rows(&[vec![2.0, 2.0]]).unwrap();
        let x = solve_right_spd(&b, &g, 1e-8);
        assert!(x.is_finite());
        let back = x.matmul(&g).unwrap();
        assert!(back.sub(&b).unwrap().norm() < 1e-6);
    }
}
