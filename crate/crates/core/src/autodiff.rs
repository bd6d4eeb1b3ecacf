//! A small reverse-mode automatic differentiation tape over [`DenseTensor`]s.
//!
//! Every forward pass records its operations on a fresh [`Tape`]; calling
//! [`Tape::backward`] on a scalar node returns the gradient of every node.

use std::sync::Arc;

use crate::tensor::{gemm, permute_data, DenseTensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Add {
        a: Var,
        b: Var,
    },
    AddRow {
        a: Var,
        b: Var,
    },
    MulRow {
        a: Var,
        b: Var,
    },
    MulConst {
        a: Var,
        mask: Vec<f64>,
    },
    Relu {
        a: Var,
    },
    Reshape {
        a: Var,
    },
    Permute {
        a: Var,
        perm: Vec<usize>,
    },
    ModeMul {
        x: Var,
        u: Var,
        mode: usize,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<Vec<f64>>,
    },
    GlobalAvgPool {
        x: Var,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    BatchNormInfer {
        x: Var,
        gamma: Var,
        beta: Var,
        inv_std: Vec<f64>,
        xhat: Vec<f64>,
    },
    BlockProp {
        x: Var,
        blocks: Arc<Vec<DenseTensor>>,
        offsets: Vec<usize>,
    },
    SegmentMean {
        x: Var,
        offsets: Vec<usize>,
    },
    Concat {
        a: Var,
        b: Var,
    },
    KhatriRao {
        factors: Vec<Var>,
    },
    SumAll {
        a: Var,
    },
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: DenseTensor,
    op: Op,
}

/// Batch statistics produced by a training-mode batch normalisation.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseTensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseTensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of the given shape when `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> DenseTensor {
        self.get(v).cloned().unwrap_or_else(|| DenseTensor::zeros(shape))
    }
}

fn accumulate(slot: &mut Option<DenseTensor>, g: DenseTensor) {
    match slot {
        Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> DenseTensor {
    DenseTensor::new(shape, data).expect("autodiff shape bookkeeping")
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// `(rows, cols)` view of a tensor whose last mode is the column mode.
fn as_rows(t: &DenseTensor) -> (usize, usize) {
    let c = *t.shape().last().expect("non-scalar tensor");
    (t.len() / c, c)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseTensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseTensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Registers a parameter or constant input.
    pub fn leaf(&mut self, t: DenseTensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Matrix product with optional transposition of either operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(sa.len() == 2 && sb.len() == 2, "matmul of {sa:?} and {sb:?}");
        let (m, k) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (k2, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        assert_eq!(k, k2, "matmul inner dimensions {sa:?} x {sb:?}");
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            ta,
            self.value(b).data(),
            tb,
            &mut out,
            0.0,
        );
        self.push(tensor(vec![m, n], out), Op::MatMul { a, b, ta, tb })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let v = self.value(a).add(self.value(b)).expect("same shape");
        self.push(v, Op::Add { a, b })
    }

    /// Adds the vector `b` to every row of `a` (broadcast over all leading modes).
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (_, c) = as_rows(self.value(a));
        assert_eq!(self.value(b).len(), c, "bias length");
        let bv = self.value(b).data();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + bv[i % c])
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(tensor(shape, data), Op::AddRow { a, b })
    }

    /// Multiplies every row of `a` elementwise by the vector `b`.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Var {
        let (_, c) = as_rows(self.value(a));
        assert_eq!(self.value(b).len(), c, "scale length");
        let bv = self.value(b).data();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x * bv[i % c])
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(tensor(shape, data), Op::MulRow { a, b })
    }

    /// Elementwise product with a constant mask, e.g. inverted dropout.
    pub fn mul_const(&mut self, a: Var, mask: Vec<f64>) -> Var {
        assert_eq!(mask.len(), self.value(a).len(), "mask length");
        let data = self.value(a).data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        self.push(tensor(shape, data), Op::MulConst { a, mask })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| x.max(0.0)).collect();
        let shape = self.shape(a).to_vec();
        self.push(tensor(shape, data), Op::Relu { a })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self.value(a).clone().reshape(shape).expect("reshape size");
        self.push(v, Op::Reshape { a })
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Var {
        let v = self.value(a).permute(perm).expect("valid permutation");
        self.push(v, Op::Permute { a, perm: perm.to_vec() })
    }

    /// Mode-`mode` product `x ×_mode U` with `U` of shape `J × D_mode`.
    pub fn mode_mul(&mut self, x: Var, u: Var, mode: usize) -> Var {
        let v = self
            .value(x)
            .mode_product(mode, self.value(u))
            .expect("mode product shapes");
        self.push(v, Op::ModeMul { x, u, mode })
    }

    /// Stride-1 convolution with zero padding `k/2` (odd square kernels keep the
    /// spatial size). `x: B×C×H×W`, `w: O×C×k×k`, `b: O`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        assert!(xs.len() == 4 && ws.len() == 4 && ws[1] == xs[1] && ws[2] == ws[3] && ws[2] % 2 == 1);
        let (bsz, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, k) = (ws[0], ws[2]);
        assert_eq!(self.value(b).len(), o, "conv bias length");
        let ckk = c * k * k;
        let hw = h * wd;
        let xv = self.value(x).data();
        let mut out = vec![0.0; bsz * o * hw];
        let mut cols = Vec::with_capacity(bsz);
        for s in 0..bsz {
            let col = im2col(&xv[s * c * hw..(s + 1) * c * hw], c, h, wd, k);
            let dst = &mut out[s * o * hw..(s + 1) * o * hw];
            let bias = self.value(b).data();
            for (oc, row) in dst.chunks_mut(hw).enumerate() {
                row.fill(bias[oc]);
            }
            gemm(o, ckk, hw, self.value(w).data(), false, &col, false, dst, 1.0);
            cols.push(col);
        }
        self.push(tensor(vec![bsz, o, h, wd], out), Op::Conv2d { x, w, b, cols })
    }

    /// Mean over the trailing two (spatial) modes of a `B×C×H×W` tensor.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        assert_eq!(s.len(), 4, "global pooling expects B×C×H×W");
        let hw = s[2] * s[3];
        let data = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|c| c.iter().sum::<f64>() / hw as f64)
            .collect();
        self.push(tensor(vec![s[0], s[1]], data), Op::GlobalAvgPool { x })
    }

    /// Batch normalisation over the rows of `x: N×C` using batch statistics.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var) -> (Var, BatchStats) {
        let (n, c) = as_rows(self.value(x));
        let xv = self.value(x).data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for r in 0..n {
            for j in 0..c {
                mean[j] += xv[r * c + j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for r in 0..n {
            for j in 0..c {
                var[j] += (xv[r * c + j] - mean[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let xhat: Vec<f64> = (0..n * c).map(|i| (xv[i] - mean[i % c]) * inv_std[i % c]).collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let data = xhat.iter().enumerate().map(|(i, h)| h * g[i % c] + bt[i % c]).collect();
        let shape = self.shape(x).to_vec();
        let v = self.push(
            tensor(shape, data),
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        );
        (v, BatchStats { mean, var })
    }

    /// Batch normalisation with frozen running statistics.
    pub fn batch_norm_infer(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64]) -> Var {
        let (_, c) = as_rows(self.value(x));
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let xhat: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| (x - mean[i % c]) * inv_std[i % c])
            .collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let data = xhat.iter().enumerate().map(|(i, h)| h * g[i % c] + bt[i % c]).collect();
        let shape = self.shape(x).to_vec();
        self.push(
            tensor(shape, data),
            Op::BatchNormInfer {
                x,
                gamma,
                beta,
                inv_std,
                xhat,
            },
        )
    }

    /// Block-diagonal propagation: rows `offsets[b]..offsets[b+1]` of `x` are
    /// left-multiplied by `blocks[b]`.
    pub fn block_prop(&mut self, x: Var, blocks: Arc<Vec<DenseTensor>>, offsets: Vec<usize>) -> Var {
        let (n, d) = as_rows(self.value(x));
        assert_eq!(offsets.len(), blocks.len() + 1);
        assert_eq!(*offsets.last().unwrap(), n);
        let xv = self.value(x).data();
        let mut out = vec![0.0; n * d];
        for (bi, a) in blocks.iter().enumerate() {
            let (lo, hi) = (offsets[bi], offsets[bi + 1]);
            let m = hi - lo;
            assert_eq!(a.shape(), &[m, m], "propagation block shape");
            gemm(
                m,
                m,
                d,
                a.data(),
                false,
                &xv[lo * d..hi * d],
                false,
                &mut out[lo * d..hi * d],
                0.0,
            );
        }
        self.push(tensor(vec![n, d], out), Op::BlockProp { x, blocks, offsets })
    }

    /// Mean of each row segment `offsets[b]..offsets[b+1]` of `x: N×d`.
    pub fn segment_mean(&mut self, x: Var, offsets: Vec<usize>) -> Var {
        let (_, d) = as_rows(self.value(x));
        let xv = self.value(x).data();
        let b = offsets.len() - 1;
        let mut out = vec![0.0; b * d];
        for s in 0..b {
            let (lo, hi) = (offsets[s], offsets[s + 1]);
            assert!(hi > lo, "empty segment");
            for r in lo..hi {
                for j in 0..d {
                    out[s * d + j] += xv[r * d + j];
                }
            }
            let inv = 1.0 / (hi - lo) as f64;
            out[s * d..(s + 1) * d].iter_mut().for_each(|v| *v *= inv);
        }
        self.push(tensor(vec![b, d], out), Op::SegmentMean { x, offsets })
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        assert!(sa.len() == 2 && sb.len() == 2 && sa[0] == sb[0], "concat {sa:?} {sb:?}");
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(sa[0] * (sa[1] + sb[1]));
        for r in 0..sa[0] {
            out.extend_from_slice(&av[r * sa[1]..(r + 1) * sa[1]]);
            out.extend_from_slice(&bv[r * sb[1]..(r + 1) * sb[1]]);
        }
        self.push(tensor(vec![sa[0], sa[1] + sb[1]], out), Op::Concat { a, b })
    }

    /// Khatri-Rao product of `D_k × R` factor matrices.
    pub fn khatri_rao(&mut self, factors: &[Var]) -> Var {
        let mats: Vec<DenseTensor> = factors.iter().map(|&f| self.value(f).clone()).collect();
        let v = crate::tensor::khatri_rao(&mats);
        self.push(
            v,
            Op::KhatriRao {
                factors: factors.to_vec(),
            },
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(tensor(vec![1], vec![s]), Op::SumAll { a })
    }

    /// Mean softmax cross-entropy of `logits: B×k` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let (b, k) = (self.shape(logits)[0], self.shape(logits)[1]);
        assert_eq!(labels.len(), b);
        let probs = softmax_rows(self.value(logits).data(), k);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| -(probs[r * k + y].max(f64::MIN_POSITIVE)).ln())
            .sum::<f64>()
            / b as f64;
        self.push(
            tensor(vec![1], vec![loss]),
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Reverse sweep from the scalar node `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<DenseTensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(tensor(self.value(out).shape().to_vec(), vec![1.0]));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, i: usize, g: &DenseTensor, grads: &mut [Option<DenseTensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (val(*a), val(*b));
                let (m, n) = (g.rows(), g.cols());
                let k = if *ta { av.rows() } else { av.cols() };
                // C = op(A) op(B); dop(A) = G op(B)ᵀ, dop(B) = op(A)ᵀ G
                let mut da = vec![0.0; av.len()];
                if *ta {
                    // dA = op(B) Gᵀ  (k×m)
                    gemm(k, n, m, bv.data(), *tb, g.data(), true, &mut da, 0.0);
                } else {
                    gemm(m, n, k, g.data(), false, bv.data(), !*tb, &mut da, 0.0);
                }
                accumulate(&mut grads[a.0], tensor(av.shape().to_vec(), da));
                let mut db = vec![0.0; bv.len()];
                if *tb {
                    // dB = Gᵀ op(A)  (n×k)
                    gemm(n, m, k, g.data(), true, av.data(), *ta, &mut db, 0.0);
                } else {
                    gemm(k, m, n, av.data(), !*ta, g.data(), false, &mut db, 0.0);
                }
                accumulate(&mut grads[b.0], tensor(bv.shape().to_vec(), db));
            }
            Op::Add { a, b } => {
                accumulate(&mut grads[a.0], g.clone());
                accumulate(&mut grads[b.0], g.clone());
            }
            Op::AddRow { a, b } => {
                let c = val(*b).len();
                let mut db = vec![0.0; c];
                for (i, x) in g.data().iter().enumerate() {
                    db[i % c] += x;
                }
                accumulate(&mut grads[a.0], g.clone());
                accumulate(&mut grads[b.0], tensor(val(*b).shape().to_vec(), db));
            }
            Op::MulRow { a, b } => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                let c = bv.len();
                let mut db = vec![0.0; c];
                let mut da = vec![0.0; av.len()];
                for (i, x) in g.data().iter().enumerate() {
                    db[i % c] += x * av[i];
                    da[i] = x * bv[i % c];
                }
                accumulate(&mut grads[a.0], tensor(val(*a).shape().to_vec(), da));
                accumulate(&mut grads[b.0], tensor(val(*b).shape().to_vec(), db));
            }
            Op::MulConst { a, mask } => {
                let da = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                accumulate(&mut grads[a.0], tensor(g.shape().to_vec(), da));
            }
            Op::Relu { a } => {
                let da = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(x, &v)| if v > 0.0 { *x } else { 0.0 })
                    .collect();
                accumulate(&mut grads[a.0], tensor(g.shape().to_vec(), da));
            }
            Op::Reshape { a } => {
                accumulate(&mut grads[a.0], g.clone().reshape(val(*a).shape()).expect("same size"));
            }
            Op::Permute { a, perm } => {
                let inv = inverse_perm(perm);
                let da = permute_data(g.data(), g.shape(), &inv);
                accumulate(&mut grads[a.0], tensor(val(*a).shape().to_vec(), da));
            }
            Op::ModeMul { x, u, mode } => {
                let (xv, uv) = (val(*x), val(*u));
                let dx = g.mode_product(*mode, &uv.transpose()).expect("mode product shapes");
                let gu = g.unfold(*mode).expect("mode in range");
                let xu = xv.unfold(*mode).expect("mode in range");
                let (j, d, cols) = (gu.rows(), xu.rows(), gu.cols());
                let mut du = vec![0.0; j * d];
                gemm(j, cols, d, gu.data(), false, xu.data(), true, &mut du, 0.0);
                accumulate(&mut grads[x.0], dx);
                accumulate(&mut grads[u.0], tensor(vec![j, d], du));
            }
            Op::Conv2d { x, w, b, cols } => {
                let (xs, ws) = (val(*x).shape(), val(*w).shape());
                let (bsz, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
                let (o, k) = (ws[0], ws[2]);
                let (ckk, hw) = (c * k * k, h * wd);
                let mut dw = vec![0.0; o * ckk];
                let mut db = vec![0.0; o];
                let mut dx = vec![0.0; val(*x).len()];
                let mut dcol = vec![0.0; ckk * hw];
                for s in 0..bsz {
                    let gs = &g.data()[s * o * hw..(s + 1) * o * hw];
                    for (oc, row) in gs.chunks(hw).enumerate() {
                        db[oc] += row.iter().sum::<f64>();
                    }
                    gemm(o, hw, ckk, gs, false, &cols[s], true, &mut dw, 1.0);
                    gemm(ckk, o, hw, val(*w).data(), true, gs, false, &mut dcol, 0.0);
                    col2im(&dcol, c, h, wd, k, &mut dx[s * c * hw..(s + 1) * c * hw]);
                }
                accumulate(&mut grads[x.0], tensor(xs.to_vec(), dx));
                accumulate(&mut grads[w.0], tensor(ws.to_vec(), dw));
                accumulate(&mut grads[b.0], tensor(val(*b).shape().to_vec(), db));
            }
            Op::GlobalAvgPool { x } => {
                let xs = val(*x).shape();
                let hw = xs[2] * xs[3];
                let inv = 1.0 / hw as f64;
                let dx = g
                    .data()
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v * inv, hw))
                    .collect();
                accumulate(&mut grads[x.0], tensor(xs.to_vec(), dx));
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = inv_std.len();
                let n = xhat.len() / c;
                let gam = val(*gamma).data();
                let gd = g.data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for i in 0..n * c {
                    dgamma[i % c] += gd[i] * xhat[i];
                    dbeta[i % c] += gd[i];
                }
                let nf = n as f64;
                let dx = (0..n * c)
                    .map(|i| {
                        let j = i % c;
                        gam[j] * inv_std[j] / nf * (nf * gd[i] - dbeta[j] - xhat[i] * dgamma[j])
                    })
                    .collect();
                accumulate(&mut grads[x.0], tensor(val(*x).shape().to_vec(), dx));
                accumulate(&mut grads[gamma.0], tensor(vec![c], dgamma));
                accumulate(&mut grads[beta.0], tensor(vec![c], dbeta));
            }
            Op::BatchNormInfer {
                x,
                gamma,
                beta,
                inv_std,
                xhat,
            } => {
                let c = inv_std.len();
                let gam = val(*gamma).data();
                let gd = g.data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (i, gv) in gd.iter().enumerate() {
                    dgamma[i % c] += gv * xhat[i];
                    dbeta[i % c] += gv;
                }
                let dx = gd
                    .iter()
                    .enumerate()
                    .map(|(i, gv)| gv * gam[i % c] * inv_std[i % c])
                    .collect();
                accumulate(&mut grads[x.0], tensor(val(*x).shape().to_vec(), dx));
                accumulate(&mut grads[gamma.0], tensor(vec![c], dgamma));
                accumulate(&mut grads[beta.0], tensor(vec![c], dbeta));
            }
            Op::BlockProp { x, blocks, offsets } => {
                let d = g.cols();
                let mut dx = vec![0.0; g.len()];
                for (bi, a) in blocks.iter().enumerate() {
                    let (lo, hi) = (offsets[bi], offsets[bi + 1]);
                    let m = hi - lo;
                    gemm(
                        m,
                        m,
                        d,
                        a.data(),
                        true,
                        &g.data()[lo * d..hi * d],
                        false,
                        &mut dx[lo * d..hi * d],
                        0.0,
                    );
                }
                accumulate(&mut grads[x.0], tensor(val(*x).shape().to_vec(), dx));
            }
            Op::SegmentMean { x, offsets } => {
                let d = g.cols();
                let mut dx = vec![0.0; val(*x).len()];
                for s in 0..offsets.len() - 1 {
                    let (lo, hi) = (offsets[s], offsets[s + 1]);
                    let inv = 1.0 / (hi - lo) as f64;
                    for r in lo..hi {
                        for j in 0..d {
                            dx[r * d + j] = g.data()[s * d + j] * inv;
                        }
                    }
                }
                accumulate(&mut grads[x.0], tensor(val(*x).shape().to_vec(), dx));
            }
            Op::Concat { a, b } => {
                let (p, q) = (val(*a).cols(), val(*b).cols());
                let mut da = Vec::with_capacity(val(*a).len());
                let mut db = Vec::with_capacity(val(*b).len());
                for row in g.data().chunks(p + q) {
                    da.extend_from_slice(&row[..p]);
                    db.extend_from_slice(&row[p..]);
                }
                accumulate(&mut grads[a.0], tensor(val(*a).shape().to_vec(), da));
                accumulate(&mut grads[b.0], tensor(val(*b).shape().to_vec(), db));
            }
            Op::KhatriRao { factors } => {
                let mats: Vec<&DenseTensor> = factors.iter().map(|&f| val(f)).collect();
                let dims: Vec<usize> = mats.iter().map(|m| m.rows()).collect();
                let r = g.cols();
                let mut dfs: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d * r]).collect();
                let mut idx = vec![0usize; dims.len()];
                for row in 0..g.rows() {
                    for c in 0..r {
                        let gv = g.data()[row * r + c];
                        if gv == 0.0 {
                            continue;
                        }
                        for k in 0..dims.len() {
                            let others: f64 = (0..dims.len())
                                .filter(|&j| j != k)
                                .map(|j| mats[j].at(idx[j], c))
                                .product();
                            dfs[k][idx[k] * r + c] += gv * others;
                        }
                    }
                    crate::tensor::increment(&mut idx, &dims);
                }
                for (k, df) in dfs.into_iter().enumerate() {
                    accumulate(&mut grads[factors[k].0], tensor(vec![dims[k], r], df));
                }
            }
            Op::SumAll { a } => {
                let s = g.data()[0];
                accumulate(&mut grads[a.0], DenseTensor::filled(val(*a).shape(), s));
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let (b, k) = (labels.len(), probs.len() / labels.len());
                let s = g.data()[0] / b as f64;
                let mut d = probs.clone();
                for (r, &y) in labels.iter().enumerate() {
                    d[r * k + y] -= 1.0;
                }
                d.iter_mut().for_each(|v| *v *= s);
                accumulate(&mut grads[logits.0], tensor(vec![b, k], d));
            }
        }
    }
}

/// Row-wise softmax of a flat `rows × k` buffer.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(k) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// `(C·k·k) × (H·W)` patch matrix of one `C×H×W` image with zero padding `k/2`.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut col = vec![0.0; c * k * k * hw];
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut col[row * hw..(row + 1) * hw];
                for i in 0..h {
                    let si = i as isize + ki as isize - pad;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for j in 0..w {
                        let sj = j as isize + kj as isize - pad;
                        if sj >= 0 && sj < w as isize {
                            dst[i * w + j] = x[(ch * h + si as usize) * w + sj as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`], accumulating into `dx`.
fn col2im(col: &[f64], c: usize, h: usize, w: usize, k: usize, dx: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &col[row * hw..(row + 1) * hw];
                for i in 0..h {
                    let si = i as isize + ki as isize - pad;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for j in 0..w {
                        let sj = j as isize + kj as isize - pad;
                        if sj >= 0 && sj < w as isize {
                            dx[(ch * h + si as usize) * w + sj as usize] += src[i * w + j];
                        }
                    }
                }
            }
        }
    }
}
