use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Mode, Model, Sample};
use super::params::Params;
use super::{ModelConfig, ModelDims, TrainConfig};
use crate::autodiff::Tape;
use crate::error::{Error, Result};

/// Adam optimiser state.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: TrainConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(params: &Params, cfg: &TrainConfig) -> Self {
        let zeros = || params.entries.iter().map(|e| vec![0.0; e.tensor.len()]).collect();
        Self {
            cfg: cfg.clone(),
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update with `grads[i]` belonging to `params.entries[i]`.
    pub fn step(&mut self, params: &mut Params, grads: &[Vec<f64>]) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for (i, entry) in params.entries.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for ((w, g), (mi, vi)) in entry
                .tensor
                .data_mut()
                .iter_mut()
                .zip(&grads[i])
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
                *w -= c.learning_rate * (*mi / bc1) / ((*vi / bc2).sqrt() + c.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean mini-batch loss with dropout active.
    pub train_loss: f64,
    pub train_acc: f64,
    pub valid_loss: f64,
    pub valid_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Trains a fresh model with Adam on mini-batches, keeping the parameters with
/// the lowest validation loss. Deterministic for a given `config.seed`.
pub fn train(
    config: &ModelConfig,
    dims: ModelDims,
    train_set: &[&Sample],
    valid_set: &[&Sample],
) -> Result<(Model, TrainLog)> {
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::State(
            "training needs nonempty train and validation subsets".into(),
        ));
    }
    let mut model = Model::new(config.clone(), dims)?;
    model.fit_pi_scale(train_set);
    let tc = config.train.clone();
    let mut adam = Adam::new(&model.params, &tc);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, Model)> = None;

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, idx) in order.chunks(tc.batch_size).enumerate() {
            let samples: Vec<&Sample> = idx.iter().map(|&i| train_set[i]).collect();
            let batch = model.make_batch(&samples)?;
            let mut tape = Tape::new();
            let fw = model.forward(&mut tape, &batch, Mode::Train(&mut rng))?;
            let loss_var = tape.softmax_cross_entropy(fw.logits, &batch.labels);
            let loss = tape.value(loss_var).data()[0];
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: bi, loss });
            }
            let grads = tape.backward(loss_var);
            let flat: Vec<Vec<f64>> = fw
                .param_vars
                .iter()
                .zip(&model.params.entries)
                .map(|(&v, e)| grads.get_or_zeros(v, e.tensor.shape()).into_data())
                .collect();
            adam.step(&mut model.params, &flat);
            if !model.params.is_finite() {
                return Err(Error::Divergence { epoch, batch: bi, loss });
            }
            for (name, stats) in &fw.bn_batch {
                if let Some(st) = model.bn.get_mut(name) {
                    st.update(&stats.mean, &stats.var, tc.bn_momentum);
                }
            }
            loss_sum += loss;
            batches += 1;
        }
        if tc.bn_population_stats {
            let batch = model.make_batch(train_set)?;
            let mut tape = Tape::new();
            let fw = model.forward(&mut tape, &batch, Mode::Statistics)?;
            for (name, stats) in &fw.bn_batch {
                if let Some(st) = model.bn.get_mut(name) {
                    st.mean.clone_from(&stats.mean);
                    st.var.clone_from(&stats.var);
                }
            }
        }
        let (_, train_acc) = model.evaluate(train_set)?;
        let (valid_loss, valid_acc) = model.evaluate(valid_set)?;
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            train_acc,
            valid_loss,
            valid_acc,
        };
        log::debug!(
            "epoch {epoch}: train loss {:.4} acc {:.3}, valid loss {:.4} acc {:.3}",
            entry.train_loss,
            train_acc,
            valid_loss,
            valid_acc
        );
        log.epochs.push(entry);
        if best.as_ref().is_none_or(|(b, _)| valid_loss < *b) {
            best = Some((valid_loss, model.clone()));
            log.best_epoch = epoch;
        }
    }
    let model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((model, log))
}
