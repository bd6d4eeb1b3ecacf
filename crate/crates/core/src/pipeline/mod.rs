//! Experiment configuration, the feature cache and the featurize → train →
//! predict stages driven by the command-line tool.

pub mod cache;
mod config;
mod stages;

pub use cache::{read_cache, read_cache_hash, read_cache_hash_opt, write_cache, FeatureCache, CACHE_VERSION};
pub use config::{
    apply_override, ConformalConfig, DatasetConfig, DatasetKind, EssentialDeath, ExperimentConfig, FeatureConfig,
    Neighbours, OutputConfig, SplitConfig, CACHE_DIR_ENV,
};
pub use stages::{
    compute_features, load_dataset, load_features, make_split, run_featurize, run_predict, run_train, summarize,
    DatasetSummary, FeaturizeOutcome, PredictOutcome, TrainOutcome,
};
