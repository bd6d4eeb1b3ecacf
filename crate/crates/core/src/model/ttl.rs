use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::Params;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Structure of a TTL weight tensor `𝒲 ∈ ℝ^{out × in}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LowRank {
    /// Full weight stored as a `Π out × Π in` matrix.
    Dense,
    /// `Σ_r c_r ⊗_n u^out_{n,r} ⊗_m u^in_{m,r}`.
    Cp { rank: usize },
    /// Core of shape `(r^out, r^in)` with one factor per mode. `ranks` lists the
    /// input-mode ranks followed by the output-mode ranks; when absent each rank is
    /// half its mode size, rounded up.
    Tucker {
        #[serde(default)]
        ranks: Option<Vec<usize>>,
    },
    /// Tensor train over the input modes followed by the output modes, with every
    /// interior bond rank equal to `rank`.
    Tt { rank: usize },
}

impl Default for LowRank {
    fn default() -> Self {
        LowRank::Tucker { ranks: None }
    }
}

impl LowRank {
    pub fn name(&self) -> &'static str {
        match self {
            LowRank::Dense => "dense",
            LowRank::Cp { .. } => "cp",
            LowRank::Tucker { .. } => "tucker",
            LowRank::Tt { .. } => "tt",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LowRank::Cp { rank: 0 } | LowRank::Tt { rank: 0 } => {
                Err(Error::Config("TTL ranks must be positive".into()))
            }
            LowRank::Tucker { ranks: Some(r) } if r.contains(&0) => {
                Err(Error::Config("Tucker ranks must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn tucker_ranks(&self, input: &[usize], output: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let LowRank::Tucker { ranks } = self else {
            unreachable!("tucker_ranks on a non-Tucker layer")
        };
        let all: Vec<usize> = match ranks {
            Some(r) => r.clone(),
            None => input.iter().chain(output).map(|d| d.div_ceil(2)).collect(),
        };
        if all.len() != input.len() + output.len() {
            return Err(Error::Config(format!(
                "Tucker needs {} ranks (input modes then output modes), got {}",
                input.len() + output.len(),
                all.len()
            )));
        }
        let (ri, ro) = all.split_at(input.len());
        let clamp = |r: &[usize], d: &[usize]| r.iter().zip(d).map(|(&r, &d)| r.min(d)).collect::<Vec<_>>();
        Ok((clamp(ri, input), clamp(ro, output)))
    }
}

/// Input and output shapes (without the batch mode) of every TTL layer.
pub fn ttl_layer_shapes(pi_shape: &[usize], widths: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut cur = pi_shape.to_vec();
    widths
        .iter()
        .map(|&w| {
            let out = vec![cur[0], cur[1], w, w];
            let pair = (cur.clone(), out.clone());
            cur = out;
            pair
        })
        .collect()
}

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> DenseTensor {
    DenseTensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Adds the parameters of TTL layer `l` to `params`. Factor scales are chosen so
/// that each stage roughly preserves the variance of its input.
pub(crate) fn init_layer(
    params: &mut Params,
    rng: &mut impl Rng,
    l: usize,
    kind: &LowRank,
    input: &[usize],
    output: &[usize],
) -> Result<()> {
    let nin: usize = input.iter().product();
    let nout: usize = output.iter().product();
    let p = |s: &str| format!("ttl{l}.{s}");
    match kind {
        LowRank::Dense => params.push(p("w"), uniform(rng, &[nout, nin], (3.0 / nin as f64).sqrt())),
        LowRank::Cp { rank } => {
            for (m, &d) in input.iter().enumerate() {
                params.push(p(&format!("in{m}")), uniform(rng, &[d, *rank], (3.0 / d as f64).sqrt()));
            }
            for (n, &d) in output.iter().enumerate() {
                params.push(p(&format!("out{n}")), uniform(rng, &[d, *rank], 3f64.sqrt()));
            }
            params.push(p("c"), uniform(rng, &[*rank], (3.0 / *rank as f64).sqrt()));
        }
        LowRank::Tucker { .. } => {
            let (ri, ro) = kind.tucker_ranks(input, output)?;
            for (m, (&d, &r)) in input.iter().zip(&ri).enumerate() {
                params.push(p(&format!("in{m}")), uniform(rng, &[r, d], (3.0 / d as f64).sqrt()));
            }
            let (pri, pro): (usize, usize) = (ri.iter().product(), ro.iter().product());
            params.push(p("core"), uniform(rng, &[pro, pri], (3.0 / pri as f64).sqrt()));
            for (n, (&d, &r)) in output.iter().zip(&ro).enumerate() {
                params.push(p(&format!("out{n}")), uniform(rng, &[d, r], (3.0 / r as f64).sqrt()));
            }
        }
        LowRank::Tt { rank } => {
            let modes: Vec<usize> = input.iter().chain(output).copied().collect();
            let last = modes.len() - 1;
            for (k, &d) in modes.iter().enumerate() {
                let rl = if k == 0 { 1 } else { *rank };
                let rr = if k == last { 1 } else { *rank };
                let fan = if k < input.len() { rl * d } else { rl };
                params.push(
                    p(&format!("core{k}")),
                    uniform(rng, &[rl, d, rr], (3.0 / fan as f64).sqrt()),
                );
            }
        }
    }
    params.push(p("bias"), DenseTensor::zeros(&[nout]));
    Ok(())
}

/// Applies TTL layer `l` to `x: B × input`, returning `B × output`.
pub(crate) fn layer_forward(
    tape: &mut Tape,
    param: &dyn Fn(&str) -> Result<Var>,
    l: usize,
    kind: &LowRank,
    x: Var,
    input: &[usize],
    output: &[usize],
) -> Result<Var> {
    let b = tape.shape(x)[0];
    let nin: usize = input.iter().product();
    let nout: usize = output.iter().product();
    let mut full_in = vec![b];
    full_in.extend_from_slice(input);
    if tape.shape(x) != full_in.as_slice() {
        return Err(Error::Shape(format!(
            "TTL layer {l} expects {:?}, got {:?}",
            full_in,
            tape.shape(x)
        )));
    }
    let p = |s: &str| param(&format!("ttl{l}.{s}"));
    let y = match kind {
        LowRank::Dense => {
            let x2 = tape.reshape(x, &[b, nin]);
            tape.matmul_t(x2, p("w")?, false, true)
        }
        LowRank::Cp { .. } => {
            let ins = (0..input.len())
                .map(|m| p(&format!("in{m}")))
                .collect::<Result<Vec<_>>>()?;
            let outs = (0..output.len())
                .map(|n| p(&format!("out{n}")))
                .collect::<Result<Vec<_>>>()?;
            let kr_in = tape.khatri_rao(&ins);
            let kr_out = tape.khatri_rao(&outs);
            let x2 = tape.reshape(x, &[b, nin]);
            let s = tape.matmul(x2, kr_in);
            let s = tape.mul_row(s, p("c")?);
            tape.matmul_t(s, kr_out, false, true)
        }
        LowRank::Tucker { .. } => {
            let (ri, ro) = kind.tucker_ranks(input, output)?;
            let mut z = x;
            for m in 0..input.len() {
                z = tape.mode_mul(z, p(&format!("in{m}"))?, m + 1);
            }
            let z = tape.reshape(z, &[b, ri.iter().product()]);
            let core = tape.matmul_t(z, p("core")?, false, true);
            let mut shape = vec![b];
            shape.extend_from_slice(&ro);
            let mut y = tape.reshape(core, &shape);
            for n in 0..output.len() {
                y = tape.mode_mul(y, p(&format!("out{n}"))?, n + 1);
            }
            tape.reshape(y, &[b, nout])
        }
        LowRank::Tt { .. } => {
            // state: [B, remaining input modes..., bond]
            let mut shape = full_in.clone();
            shape.push(1);
            let mut t = tape.reshape(x, &shape);
            for (k, &d) in input.iter().enumerate() {
                let core = p(&format!("core{k}"))?;
                let (rl, rr) = (tape.shape(core)[0], tape.shape(core)[2]);
                let order = shape.len();
                let mut perm = vec![0];
                perm.extend(2..order);
                perm.push(1);
                let tp = tape.permute(t, &perm);
                let rest: usize = shape[2..order - 1].iter().product();
                let flat = tape.reshape(tp, &[b * rest, rl * d]);
                let core2 = tape.reshape(core, &[rl * d, rr]);
                let prod = tape.matmul(flat, core2);
                shape = [&[b][..], &shape[2..order - 1], &[rr][..]].concat();
                t = tape.reshape(prod, &shape);
            }
            let mut outer = b;
            for (n, &d) in output.iter().enumerate() {
                let core = p(&format!("core{}", input.len() + n))?;
                let (rl, rr) = (tape.shape(core)[0], tape.shape(core)[2]);
                let flat = tape.reshape(t, &[outer, rl]);
                let core2 = tape.reshape(core, &[rl, d * rr]);
                t = tape.matmul(flat, core2);
                outer *= d;
            }
            tape.reshape(t, &[b, nout])
        }
    };
    let y = tape.add_row(y, p("bias")?);
    let mut full_out = vec![b];
    full_out.extend_from_slice(output);
    Ok(tape.reshape(y, &full_out))
}

/// Dense `Π out × Π in` weight represented by the parameters of TTL layer `l`.
pub fn ttl_dense_weight(
    params: &Params,
    l: usize,
    kind: &LowRank,
    input: &[usize],
    output: &[usize],
) -> Result<DenseTensor> {
    let nin: usize = input.iter().product();
    let mut tape = Tape::new();
    let mut vars = Vec::new();
    for e in &params.entries {
        vars.push(tape.leaf(e.tensor.clone()));
    }
    let lookup = |name: &str| {
        params
            .position(name)
            .map(|i| vars[i])
            .ok_or_else(|| Error::State(format!("missing parameter {name}")))
    };
    let mut shape = vec![nin];
    shape.extend_from_slice(input);
    let eye = tape.leaf(DenseTensor::eye(nin).reshape(&shape)?);
    let y = layer_forward(&mut tape, &lookup, l, kind, eye, input, output)?;
    let nout: usize = output.iter().product();
    let bias = params.get(&format!("ttl{l}.bias"))?;
    // rows of y are W e_i + b; drop the bias and transpose
    let yv = tape.value(y).clone().reshape(&[nin, nout])?;
    let w = DenseTensor::from_fn(&[nout, nin], |ix| yv.at(ix[1], ix[0]) - bias.data()[ix[0]]);
    Ok(w)
}
