use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense tensor of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero-sized mode in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, shape);
        }
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Matrix with the given rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(vec![r, c], rows.concat())
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &d)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(ix < d, "index {ix} out of range in mode {i}");
            off = off * d + ix;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Entry `(r, c)` of a matrix.
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    /// Tensor inner product `Σ a_i b_i`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Reorders modes so that new mode `k` is old mode `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let m = self.order();
        let mut seen = vec![false; m];
        if perm.len() != m || perm.iter().any(|&p| p >= m || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Shape(format!("invalid permutation {perm:?}")));
        }
        Ok(Self {
            shape: perm.iter().map(|&p| self.shape[p]).collect(),
            data: permute_data(&self.data, &self.shape, perm),
        })
    }

    /// Mode-`m` unfolding: a `D_m × (Π_{k≠m} D_k)` matrix whose columns run over
    /// the remaining modes in row-major order.
    pub fn unfold(&self, mode: usize) -> Result<Self> {
        if mode >= self.order() {
            return Err(Error::Shape(format!("mode {mode} out of range")));
        }
        let mut perm: Vec<usize> = vec![mode];
        perm.extend((0..self.order()).filter(|&k| k != mode));
        let p = self.permute(&perm)?;
        let rows = self.shape[mode];
        let cols = self.data.len() / rows;
        p.reshape(&[rows, cols])
    }

    /// Inverse of [`unfold`](Self::unfold).
    pub fn fold(mat: Self, mode: usize, shape: &[usize]) -> Result<Self> {
        let mut pshape = vec![shape[mode]];
        pshape.extend(shape.iter().enumerate().filter(|(k, _)| *k != mode).map(|(_, &d)| d));
        let t = mat.reshape(&pshape)?;
        // inverse of the permutation used by unfold
        let m = shape.len();
        let mut inv = vec![0usize; m];
        let mut fwd: Vec<usize> = vec![mode];
        fwd.extend((0..m).filter(|&k| k != mode));
        for (new, &old) in fwd.iter().enumerate() {
            inv[old] = new;
        }
        t.permute(&inv)
    }

    /// Mode-`m` product `t ×_m U` with `U` of shape `J × D_m`.
    pub fn mode_product(&self, mode: usize, u: &Self) -> Result<Self> {
        if u.order() != 2 || mode >= self.order() || u.cols() != self.shape[mode] {
            return Err(Error::Shape(format!(
                "mode-{mode} product of {:?} with {:?}",
                self.shape,
                u.shape()
            )));
        }
        let unf = self.unfold(mode)?;
        let prod = u.matmul(&unf)?;
        let mut shape = self.shape.clone();
        shape[mode] = u.rows();
        Self::fold(prod, mode, &shape)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.order() != 2 || other.order() != 2 || self.cols() != other.rows() {
            return Err(Error::Shape(format!("matmul {:?} x {:?}", self.shape, other.shape)));
        }
        let (m, k, n) = (self.rows(), self.cols(), other.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, false, &other.data, false, &mut out, 0.0);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Self {
        assert_eq!(self.order(), 2, "transpose needs a matrix");
        let (r, c) = (self.rows(), self.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Self {
            shape: vec![c, r],
            data,
        }
    }

    /// Outer product of vectors, `u_1 ∘ u_2 ∘ ⋯`.
    pub fn outer(vectors: &[&[f64]]) -> Self {
        let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
        Self::from_fn(&shape, |idx| idx.iter().zip(vectors).map(|(&i, v)| v[i]).product())
    }
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Advances a row-major multi-index; wraps to zero after the last entry.
pub fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..shape.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Permutes row-major `data` of `shape` so new mode `k` is old mode `perm[k]`.
pub fn permute_data(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let old_strides = strides(shape);
    let new_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let m = new_shape.len();
    if m == 0 {
        out.push(data[0]);
        return out;
    }
    let last = m - 1;
    let mut idx = vec![0usize; m];
    let mut base = 0usize;
    loop {
        let s = src_strides[last];
        for i in 0..new_shape[last] {
            out.push(data[base + i * s]);
        }
        // carry into the higher modes
        let mut k = last;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            base += src_strides[k];
            if idx[k] < new_shape[k] {
                break;
            }
            base -= src_strides[k] * new_shape[k];
            idx[k] = 0;
        }
    }
}

/// `c = a·b + beta·c` for row-major matrices; `ta`/`tb` read the operand transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    // SAFETY: slice lengths cover every index implied by the dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_product_examples() {
        let ones = DenseTensor::filled(&[2, 3], 1.0);
        assert_eq!(ones.inner(&ones).unwrap(), 6.0);
        assert_eq!(ones.inner(&DenseTensor::zeros(&[2, 3])).unwrap(), 0.0);
        let a = DenseTensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseTensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        assert_eq!(a.inner(&b).unwrap(), 70.0);
        assert!(a.inner(&ones).is_err());
    }

    #[test]
    fn mode_product_identity_and_vector() {
        let t = DenseTensor::from_fn(&[2, 3, 4], |i| (i[0] * 12 + i[1] * 4 + i[2]) as f64);
        for m in 0..3 {
            let id = DenseTensor::eye(t.shape()[m]);
            assert_eq!(t.mode_product(m, &id).unwrap(), t);
        }
        let v = DenseTensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let u = DenseTensor::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 0.0]]).unwrap();
        let r = v.mode_product(0, &u).unwrap();
        assert_eq!(r.shape(), &[2]);
        assert_eq!(r.data(), &[4.0, 4.0]);
    }

    #[test]
    fn mode_product_matches_matricization() {
        // (2,3) tensor, second mode with a 4x3 matrix: equals T · Uᵀ
        let t = DenseTensor::from_fn(&[2, 3], |i| (i[0] as f64 + 1.0) * (i[1] as f64 - 0.5));
        let u = DenseTensor::from_fn(&[4, 3], |i| (i[0] * 3 + i[1]) as f64 * 0.1 - 0.3);
        let got = t.mode_product(1, &u).unwrap();
        let want = t.matmul(&u.transpose()).unwrap();
        assert_eq!(got.shape(), &[2, 4]);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn unfold_fold_roundtrip() {
        let t = DenseTensor::from_fn(&[2, 3, 4], |i| (i[0] * 100 + i[1] * 10 + i[2]) as f64);
        for m in 0..3 {
            let u = t.unfold(m).unwrap();
            assert_eq!(u.rows(), t.shape()[m]);
            assert_eq!(DenseTensor::fold(u, m, t.shape()).unwrap(), t);
        }
        // mode-1 unfolding entry (j, i*4+k) = t[i,j,k]
        let u1 = t.unfold(1).unwrap();
        assert_eq!(u1.at(2, 4 + 3), t.get(&[1, 2, 3]));
    }

    #[test]
    fn gemm_transposes() {
        let a = DenseTensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = DenseTensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let mut c = vec![0.0; 4];
        gemm(2, 3, 2, a.data(), false, b.data(), false, &mut c, 0.0);
        assert_eq!(c, vec![4.0, 5.0, 10.0, 11.0]);
        let at = a.transpose();
        let mut c2 = vec![0.0; 4];
        gemm(2, 3, 2, at.data(), true, b.data(), false, &mut c2, 0.0);
        assert_eq!(c, c2);
    }
}
