use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{BnState, Params};
use super::ttl::{init_layer, layer_forward, ttl_layer_shapes};
use super::{ModelConfig, ModelDims};
use crate::autodiff::{softmax_rows, BatchStats, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, Graph};
use crate::tensor::DenseTensor;

/// Graph-side inputs with the propagation matrix `Â^τ` precomputed.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub nodes: usize,
    pub feature_dim: usize,
    pub features: Vec<f64>,
    pub propagation: DenseTensor,
}

impl PreparedGraph {
    pub fn new(g: &Graph, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::Config("tau must be at least 1".into()));
        }
        let a = normalized_adjacency(g);
        let mut p = a.clone();
        for _ in 1..tau {
            p = p.matmul(&a)?;
        }
        Ok(Self {
            nodes: g.node_count(),
            feature_dim: g.feature_dim(),
            features: g.features().to_vec(),
            propagation: p,
        })
    }
}

/// One model input: graph, PI tensor and class label.
#[derive(Debug, Clone)]
pub struct Sample {
    pub graph: PreparedGraph,
    pub pi: DenseTensor,
    pub label: usize,
}

/// A stacked mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `B × K × Q × P × P`, already scaled per channel.
    pub pi: DenseTensor,
    /// `N × F` node features of all graphs stacked.
    pub features: DenseTensor,
    pub blocks: Arc<Vec<DenseTensor>>,
    pub offsets: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Graph-level representation `z = [z_pit, z_g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEmbedding {
    pub z_pit: Vec<f64>,
    pub z_g: Vec<f64>,
    pub z: Vec<f64>,
}

pub enum Mode<'a> {
    /// Dropout active and batch-norm on batch statistics.
    Train(&'a mut ChaCha8Rng),
    /// Batch-norm on batch statistics without dropout; used to measure
    /// population statistics.
    Statistics,
    Eval,
}

pub(crate) struct Forward {
    pub logits: Var,
    pub z_pit: Var,
    pub z_g: Var,
    pub z: Var,
    pub param_vars: Vec<Var>,
    pub bn_batch: Vec<(String, BatchStats)>,
}

const INFERENCE_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub params: Params,
    pub bn: BTreeMap<String, BnState>,
    /// Per-channel (`K·Q`) divisor applied to PI tensors before the first layer.
    pub pi_scale: Vec<f64>,
}

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> DenseTensor {
    DenseTensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

impl Model {
    /// Fresh model with seeded uniform fan-in initialisation.
    pub fn new(config: ModelConfig, dims: ModelDims) -> Result<Self> {
        config.validate()?;
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::default();
        let mut bn = BTreeMap::new();
        let (k, q) = (dims.pi_shape[0], dims.pi_shape[1]);
        if config.ttl.enabled {
            for (l, (input, output)) in ttl_layer_shapes(&dims.pi_shape, &config.ttl.widths).iter().enumerate() {
                init_layer(&mut params, &mut rng, l, &config.ttl.lowrank, input, output)?;
            }
        }
        let ks = config.cnn_kernel;
        let mut cin = k * q;
        for (i, &cout) in config.cnn_channels.iter().enumerate() {
            let fan = (cin * ks * ks) as f64;
            params.push(
                format!("conv{i}.w"),
                uniform(&mut rng, &[cout, cin, ks, ks], (6.0 / fan).sqrt()),
            );
            params.push(format!("conv{i}.b"), uniform(&mut rng, &[cout], 1.0 / fan.sqrt()));
            cin = cout;
        }
        let h = config.gcl_hidden;
        let mut fin = dims.node_features;
        for l in 0..config.gcl_layers {
            params.push(
                format!("gcl{l}.theta"),
                uniform(&mut rng, &[fin, h], (6.0 / fin as f64).sqrt()),
            );
            for j in 0..2 {
                params.push(
                    format!("gcl{l}.mlp{j}.w"),
                    uniform(&mut rng, &[h, h], (6.0 / h as f64).sqrt()),
                );
                params.push(format!("gcl{l}.bn{j}.gamma"), DenseTensor::filled(&[h], 1.0));
                params.push(format!("gcl{l}.bn{j}.beta"), DenseTensor::zeros(&[h]));
                bn.insert(format!("gcl{l}.bn{j}"), BnState::new(h));
            }
            fin = h;
        }
        let mut width = config.embedding_len();
        for (i, &hw) in config.head_hidden.iter().enumerate() {
            let fan = width as f64;
            params.push(
                format!("head{i}.w"),
                uniform(&mut rng, &[width, hw], (6.0 / fan).sqrt()),
            );
            params.push(format!("head{i}.b"), uniform(&mut rng, &[hw], 1.0 / fan.sqrt()));
            width = hw;
        }
        let fan = width as f64;
        params.push("out.w", uniform(&mut rng, &[width, dims.classes], 1.0 / fan.sqrt()));
        params.push("out.b", uniform(&mut rng, &[dims.classes], 1.0 / fan.sqrt()));
        Ok(Self {
            config,
            pi_scale: vec![1.0; k * q],
            dims,
            params,
            bn,
        })
    }

    /// Sets the per-channel PI divisor to each channel's maximum over `samples`.
    pub fn fit_pi_scale(&mut self, samples: &[&Sample]) {
        let kq = self.pi_scale.len();
        let mut mx = vec![0.0f64; kq];
        for s in samples {
            let plane = s.pi.len() / kq;
            for (c, chunk) in s.pi.data().chunks(plane).enumerate() {
                mx[c] = chunk.iter().fold(mx[c], |a, &b| a.max(b));
            }
        }
        self.pi_scale = mx.into_iter().map(|m| if m > 0.0 { m } else { 1.0 }).collect();
    }

    pub fn make_batch(&self, samples: &[&Sample]) -> Result<Batch> {
        if samples.is_empty() {
            return Err(Error::State("empty batch".into()));
        }
        let kq = self.pi_scale.len();
        let per: usize = self.dims.pi_shape.iter().product();
        let f = self.dims.node_features;
        let mut pi = Vec::with_capacity(samples.len() * per);
        let mut feats = Vec::new();
        let mut blocks = Vec::with_capacity(samples.len());
        let mut offsets = vec![0];
        for s in samples {
            if s.pi.shape() != self.dims.pi_shape.as_slice() {
                return Err(Error::Shape(format!(
                    "PI tensor {:?}, model expects {:?}",
                    s.pi.shape(),
                    self.dims.pi_shape
                )));
            }
            if s.graph.feature_dim != f {
                return Err(Error::Shape(format!(
                    "node features of width {}, model expects {f}",
                    s.graph.feature_dim
                )));
            }
            if s.graph.nodes == 0 {
                return Err(Error::InvalidGraph("graph without nodes".into()));
            }
            let plane = per / kq;
            pi.extend(
                s.pi.data()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v / self.pi_scale[i / plane]),
            );
            feats.extend_from_slice(&s.graph.features);
            blocks.push(s.graph.propagation.clone());
            offsets.push(offsets.last().unwrap() + s.graph.nodes);
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(&self.dims.pi_shape);
        Ok(Batch {
            pi: DenseTensor::new(shape, pi)?,
            features: DenseTensor::new(vec![*offsets.last().unwrap(), f], feats)?,
            blocks: Arc::new(blocks),
            offsets,
            labels: samples.iter().map(|s| s.label).collect(),
        })
    }

    pub(crate) fn forward(&self, tape: &mut Tape, batch: &Batch, mut mode: Mode) -> Result<Forward> {
        let cfg = &self.config;
        let param_vars: Vec<Var> = self
            .params
            .entries
            .iter()
            .map(|e| tape.leaf(e.tensor.clone()))
            .collect();
        let lookup = |name: &str| {
            self.params
                .position(name)
                .map(|i| param_vars[i])
                .ok_or_else(|| Error::State(format!("missing parameter {name}")))
        };
        let b = batch.labels.len();
        let (k, q) = (self.dims.pi_shape[0], self.dims.pi_shape[1]);

        let mut x = tape.leaf(batch.pi.clone());
        if cfg.ttl.enabled {
            let shapes = ttl_layer_shapes(&self.dims.pi_shape, &cfg.ttl.widths);
            let last = shapes.len() - 1;
            for (l, (input, output)) in shapes.iter().enumerate() {
                x = layer_forward(tape, &lookup, l, &cfg.ttl.lowrank, x, input, output)?;
                if l < last {
                    x = tape.relu(x);
                }
            }
        }
        let s = tape.shape(x)[3];
        let mut h = tape.reshape(x, &[b, k * q, s, s]);
        for i in 0..cfg.cnn_channels.len() {
            h = tape.conv2d(h, lookup(&format!("conv{i}.w"))?, lookup(&format!("conv{i}.b"))?);
            h = tape.relu(h);
        }
        let z_pit = tape.global_avg_pool(h);

        let mut bn_batch = Vec::new();
        let mut g = tape.leaf(batch.features.clone());
        for l in 0..cfg.gcl_layers {
            let p = tape.block_prop(g, batch.blocks.clone(), batch.offsets.clone());
            let t = tape.matmul(p, lookup(&format!("gcl{l}.theta"))?);
            let mut t = tape.relu(t);
            for j in 0..2 {
                t = tape.matmul(t, lookup(&format!("gcl{l}.mlp{j}.w"))?);
                let name = format!("gcl{l}.bn{j}");
                let (gamma, beta) = (lookup(&format!("{name}.gamma"))?, lookup(&format!("{name}.beta"))?);
                t = match &mode {
                    Mode::Train(_) | Mode::Statistics => {
                        let (v, stats) = tape.batch_norm_train(t, gamma, beta);
                        bn_batch.push((name, stats));
                        v
                    }
                    Mode::Eval => {
                        let st = self
                            .bn
                            .get(&name)
                            .ok_or_else(|| Error::State(format!("missing batch-norm state {name}")))?;
                        tape.batch_norm_infer(t, gamma, beta, &st.mean, &st.var)
                    }
                };
                t = tape.relu(t);
            }
            g = t;
        }
        let z_g = tape.segment_mean(g, batch.offsets.clone());
        let z = tape.concat(z_pit, z_g);

        let mut a = self.dropout(tape, z, &mut mode);
        for i in 0..cfg.head_hidden.len() {
            a = tape.matmul(a, lookup(&format!("head{i}.w"))?);
            a = tape.add_row(a, lookup(&format!("head{i}.b"))?);
            a = tape.relu(a);
            a = self.dropout(tape, a, &mut mode);
        }
        let logits = tape.matmul(a, lookup("out.w")?);
        let logits = tape.add_row(logits, lookup("out.b")?);
        Ok(Forward {
            logits,
            z_pit,
            z_g,
            z,
            param_vars,
            bn_batch,
        })
    }

    /// Runs only the TTL stack on a batch `x: B×K×Q×P×P` (identity when disabled).
    pub fn ttl_forward(&self, x: &DenseTensor) -> Result<DenseTensor> {
        if !self.config.ttl.enabled {
            return Ok(x.clone());
        }
        let mut tape = Tape::new();
        let param_vars: Vec<Var> = self
            .params
            .entries
            .iter()
            .map(|e| tape.leaf(e.tensor.clone()))
            .collect();
        let lookup = |name: &str| {
            self.params
                .position(name)
                .map(|i| param_vars[i])
                .ok_or_else(|| Error::State(format!("missing parameter {name}")))
        };
        let shapes = ttl_layer_shapes(&self.dims.pi_shape, &self.config.ttl.widths);
        let last = shapes.len() - 1;
        let mut h = tape.leaf(x.clone());
        for (l, (input, output)) in shapes.iter().enumerate() {
            h = layer_forward(&mut tape, &lookup, l, &self.config.ttl.lowrank, h, input, output)?;
            if l < last {
                h = tape.relu(h);
            }
        }
        Ok(tape.value(h).clone())
    }

    fn dropout(&self, tape: &mut Tape, x: Var, mode: &mut Mode) -> Var {
        let p = self.config.dropout;
        match mode {
            Mode::Train(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = (0..tape.value(x).len())
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                tape.mul_const(x, mask)
            }
            _ => x,
        }
    }

    fn eval_chunks<T: Send>(
        &self,
        samples: &[&Sample],
        f: impl Fn(&Tape, &Forward, usize) -> T + Sync,
    ) -> Result<Vec<T>> {
        let parts = samples
            .par_chunks(INFERENCE_CHUNK)
            .map(|chunk| {
                let batch = self.make_batch(chunk)?;
                let mut tape = Tape::new();
                let fw = self.forward(&mut tape, &batch, Mode::Eval)?;
                Ok((0..chunk.len()).map(|r| f(&tape, &fw, r)).collect::<Vec<T>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.into_iter().flatten().collect())
    }

    /// Softmax class probabilities for each sample (dropout off, frozen batch-norm).
    pub fn predict_proba(&self, samples: &[&Sample]) -> Result<Vec<Vec<f64>>> {
        let k = self.dims.classes;
        self.eval_chunks(samples, |tape, fw, r| {
            softmax_rows(&tape.value(fw.logits).data()[r * k..(r + 1) * k], k)
        })
    }

    pub fn embed(&self, samples: &[&Sample]) -> Result<Vec<GraphEmbedding>> {
        self.eval_chunks(samples, |tape, fw, r| {
            let row = |v: Var| tape.value(v).row(r).to_vec();
            GraphEmbedding {
                z_pit: row(fw.z_pit),
                z_g: row(fw.z_g),
                z: row(fw.z),
            }
        })
    }

    /// Mean cross-entropy and accuracy in evaluation mode.
    pub fn evaluate(&self, samples: &[&Sample]) -> Result<(f64, f64)> {
        if samples.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let probs = self.predict_proba(samples)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (p, s) in probs.iter().zip(samples) {
            loss -= p[s.label].max(f64::MIN_POSITIVE).ln();
            let arg = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            correct += usize::from(arg == s.label);
        }
        let n = samples.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }
}
