//! The graph classifier: an optional tensor transformation layer (TTL) and a
//! small CNN over the persistence-image tensor, a graph convolution branch over
//! node features, and an MLP head with softmax output.

mod checkpoint;
mod gradcheck;
mod network;
mod params;
mod train;
mod ttl;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use network::{Batch, GraphEmbedding, Mode, Model, PreparedGraph, Sample};
pub use params::{BnState, ParamEntry, Params};
pub use train::{train, Adam, EpochLog, TrainLog};
pub use ttl::{ttl_dense_weight, ttl_layer_shapes, LowRank};

/// Optimiser and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the current batch in the running batch-norm statistics.
    pub bn_momentum: f64,
    /// After every epoch, replace the running batch-norm statistics by the exact
    /// statistics of the whole training subset.
    pub bn_population_stats: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 100,
            bn_momentum: 0.1,
            bn_population_stats: true,
        }
    }
}

/// Tensor transformation layer settings. Layer `ℓ` maps a `K×Q×a×a` tensor to
/// `K×Q×d_ℓ×d_ℓ` where `d_ℓ = widths[ℓ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtlConfig {
    pub enabled: bool,
    pub widths: Vec<usize>,
    pub lowrank: LowRank,
}

impl Default for TtlConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            widths: vec![32],
            lowrank: LowRank::Tucker { ranks: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub ttl: TtlConfig,
    /// Output channels of each convolution layer.
    pub cnn_channels: Vec<usize>,
    /// Odd square kernel size shared by all convolution layers.
    pub cnn_kernel: usize,
    pub gcl_layers: usize,
    pub gcl_hidden: usize,
    /// Power of the normalised adjacency used for propagation.
    pub tau: usize,
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ttl: TtlConfig::default(),
            cnn_channels: vec![8, 16],
            cnn_kernel: 3,
            gcl_layers: 3,
            gcl_hidden: 32,
            tau: 2,
            head_hidden: vec![32],
            dropout: 0.5,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.cnn_channels.is_empty() || self.cnn_channels.contains(&0) {
            return bad("cnn_channels must be a nonempty list of positive widths");
        }
        if self.cnn_kernel.is_multiple_of(2) {
            return bad("cnn_kernel must be odd");
        }
        if self.gcl_layers == 0 || self.gcl_hidden == 0 {
            return bad("gcl_layers and gcl_hidden must be positive");
        }
        if self.tau == 0 {
            return bad("tau must be at least 1");
        }
        if self.head_hidden.contains(&0) {
            return bad("head_hidden widths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.ttl.enabled && (self.ttl.widths.is_empty() || self.ttl.widths.contains(&0)) {
            return bad("ttl.widths must be a nonempty list of positive widths when the TTL is enabled");
        }
        self.ttl.lowrank.validate()?;
        let t = &self.train;
        if t.batch_size == 0 || !(t.learning_rate > 0.0) || !(0.0..=1.0).contains(&t.bn_momentum) {
            return bad("train.batch_size and train.learning_rate must be positive, bn_momentum in [0, 1]");
        }
        Ok(())
    }

    /// Length of the concatenated graph embedding.
    pub fn embedding_len(&self) -> usize {
        self.cnn_channels.last().copied().unwrap_or(0) + self.gcl_hidden
    }
}

/// Data-dependent sizes fixed when a model is created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// `[K, Q, P, P]`.
    pub pi_shape: Vec<usize>,
    pub node_features: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.pi_shape.len() != 4 || self.pi_shape.contains(&0) || self.pi_shape[2] != self.pi_shape[3] {
            return Err(Error::Shape(format!(
                "PI tensor shape must be K×Q×P×P, got {:?}",
                self.pi_shape
            )));
        }
        if self.node_features == 0 || self.classes < 2 {
            return Err(Error::Config("need at least one node feature and two classes".into()));
        }
        Ok(())
    }
}
