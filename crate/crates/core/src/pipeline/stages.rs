use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::cache::{read_cache, read_cache_hash, write_cache, FeatureCache};
use super::config::{DatasetKind, EssentialDeath, ExperimentConfig};
use crate::conformal::{conditional_prediction_set, evaluate_sets, nonconformity_score, CalibrationRecord, SetMetrics};
use crate::error::{Error, Result};
use crate::graph::synthetic::separable_dataset;
use crate::graph::{load_tudataset, split_dataset, DatasetSplit, LabeledGraph, Subset};
use crate::model::{load_checkpoint, save_checkpoint, train, Checkpoint, ModelDims, PreparedGraph, Sample, TrainLog};
use crate::persistence::{
    compute_graph_diagrams, fit_grids, pi_tensor_from_diagrams, GraphFeatures, SimilarityMeasure,
};
use crate::ARTIFACT_VERSION;

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Vec<LabeledGraph>> {
    let d = &cfg.dataset;
    let graphs = match d.kind {
        DatasetKind::Tudataset => load_tudataset(d.path.join(&d.name), &d.name)?,
        DatasetKind::SyntheticSeparable => separable_dataset(d.synthetic_count, d.synthetic_seed),
    };
    if graphs.is_empty() {
        return Err(Error::Format {
            path: d.path.join(&d.name),
            msg: "dataset contains no graphs".into(),
        });
    }
    Ok(graphs)
}

pub fn make_split(cfg: &ExperimentConfig, n: usize) -> Result<DatasetSplit> {
    split_dataset(n, cfg.split.ratios, cfg.split.seed)
}

/// Graph count, class count, mean node and edge counts, graphs per class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub graphs: usize,
    pub classes: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub class_counts: Vec<usize>,
}

pub fn summarize(graphs: &[LabeledGraph]) -> DatasetSummary {
    let n = graphs.len().max(1) as f64;
    let classes = graphs.iter().map(|g| g.label + 1).max().unwrap_or(0);
    let mut class_counts = vec![0; classes];
    for g in graphs {
        class_counts[g.label] += 1;
    }
    DatasetSummary {
        graphs: graphs.len(),
        classes,
        mean_nodes: graphs.iter().map(|g| g.graph.node_count() as f64).sum::<f64>() / n,
        mean_edges: graphs.iter().map(|g| g.graph.edge_count() as f64).sum::<f64>() / n,
        class_counts,
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} featurisation workers: {e}")))
}

/// Diagrams, grids fitted on the train and calibration subsets, and PI tensors.
pub fn compute_features(cfg: &ExperimentConfig, graphs: &[LabeledGraph], split: &DatasetSplit) -> Result<FeatureCache> {
    let pi_cfg = cfg.features.pi_config();
    let pool = thread_pool(cfg.features.workers)?;
    let mut diagrams = pool.install(|| {
        graphs
            .par_iter()
            .map(|lg| compute_graph_diagrams(&lg.graph, &pi_cfg.filtrations))
            .collect::<Result<Vec<_>>>()
    })?;
    if cfg.features.essential_death == EssentialDeath::DatasetMax {
        for k in 0..pi_cfg.filtrations.len() {
            let mx = diagrams
                .iter()
                .map(|d| d.per_filtration[k].essential_death)
                .fold(f64::NEG_INFINITY, f64::max);
            diagrams
                .iter_mut()
                .for_each(|d| d.per_filtration[k].essential_death = mx);
        }
    }
    let fit_on: Vec<usize> = split.train.iter().chain(&split.calib).copied().collect();
    let grids = fit_grids(fit_on.iter().map(|&i| &diagrams[i]), &pi_cfg);
    let pi = pool.install(|| {
        diagrams
            .par_iter()
            .map(|d| pi_tensor_from_diagrams(d, &grids, &pi_cfg))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(FeatureCache {
        feature_hash: cfg.feature_hash(),
        version: ARTIFACT_VERSION.to_string(),
        filtrations: pi_cfg.filtrations,
        labels: graphs.iter().map(|g| g.label).collect(),
        diagrams,
        grids,
        pi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizeOutcome {
    pub path: PathBuf,
    /// False when a cache with a matching hash already existed.
    pub recomputed: bool,
    pub graphs: usize,
}

/// Computes and writes the feature cache unless a matching one exists.
pub fn run_featurize(cfg: &ExperimentConfig) -> Result<FeaturizeOutcome> {
    let path = cfg.cache_path();
    let hash = cfg.feature_hash();
    if path.exists() && read_cache_hash(&path)? == hash {
        let cache = read_cache(&path)?;
        log::info!("feature cache {} is up to date", path.display());
        return Ok(FeaturizeOutcome {
            path,
            recomputed: false,
            graphs: cache.len(),
        });
    }
    let graphs = load_dataset(cfg)?;
    let split = make_split(cfg, graphs.len())?;
    let cache = compute_features(cfg, &graphs, &split)?;
    write_cache(&path, &cache)?;
    log::info!("wrote feature cache for {} graphs to {}", cache.len(), path.display());
    Ok(FeaturizeOutcome {
        path,
        recomputed: true,
        graphs: cache.len(),
    })
}

/// Reads the feature cache of `cfg`, checking that it matches the config.
pub fn load_features(cfg: &ExperimentConfig) -> Result<FeatureCache> {
    let path = cfg.cache_path();
    if !path.exists() {
        return Err(Error::MissingCache(format!(
            "no feature cache at {}; run `topoconf featurize` with the same config first",
            path.display()
        )));
    }
    let cache = read_cache(&path)?;
    if cache.feature_hash != cfg.feature_hash() {
        return Err(Error::CacheVersion(format!(
            "{} was built for a different feature config; rerun `featurize`",
            path.display()
        )));
    }
    Ok(cache)
}

/// Dataset, split, cache and model inputs for the train and predict stages.
struct Prepared {
    split: DatasetSplit,
    cache: FeatureCache,
    samples: Vec<Sample>,
    dims: ModelDims,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let cache = load_features(cfg)?;
    let graphs = load_dataset(cfg)?;
    if graphs.len() != cache.len() || graphs.iter().zip(&cache.labels).any(|(g, &l)| g.label != l) {
        return Err(Error::CacheVersion(format!(
            "feature cache {} does not match the dataset on disk; rerun `featurize`",
            cfg.cache_path().display()
        )));
    }
    let split = make_split(cfg, graphs.len())?;
    let tau = cfg.model.tau;
    let samples = graphs
        .par_iter()
        .zip(cache.pi.par_iter())
        .map(|(lg, pi)| {
            Ok(Sample {
                graph: PreparedGraph::new(&lg.graph, tau)?,
                pi: pi.clone(),
                label: lg.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dims = ModelDims {
        pi_shape: cache.pi_shape(),
        node_features: graphs[0].graph.feature_dim(),
        classes: summarize(&graphs).classes.max(2),
    };
    Ok(Prepared {
        split,
        cache,
        samples,
        dims,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, header: &serde_json::Value, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    out.push_str(&serde_json::to_string(header)?);
    out.push('\n');
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub log: TrainLog,
    pub train_accuracy: f64,
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let p = prepare(cfg)?;
    let subset = |s: Subset| p.split.subset(s).iter().map(|&i| &p.samples[i]).collect::<Vec<_>>();
    let (tr, va) = (subset(Subset::Train), subset(Subset::Valid));
    log::info!(
        "training on {} graphs ({} validation), {} epochs",
        tr.len(),
        va.len(),
        cfg.model.train.epochs
    );
    let (model, log) = train(&cfg.model, p.dims.clone(), &tr, &va)?;
    let (_, train_accuracy) = model.evaluate(&tr)?;
    let mut ckpt = Checkpoint::new(model, log.clone(), p.cache.feature_hash.clone());
    ckpt.config_hash = cfg.config_hash();
    let path = cfg.checkpoint_path();
    save_checkpoint(&path, &ckpt)?;
    let log_path = cfg.run_dir().join("train_log.jsonl");
    let header = json!({
        "config_hash": cfg.config_hash(),
        "version": ARTIFACT_VERSION,
        "best_epoch": log.best_epoch,
    });
    write_jsonl(&log_path, &header, &log.epochs)?;
    Ok(TrainOutcome {
        checkpoint: path,
        log_path,
        log,
        train_accuracy,
    })
}

#[derive(Debug, Clone, Serialize)]
struct ResultRecord<'a> {
    graph: usize,
    label: usize,
    p_values: &'a [f64],
    set: &'a [usize],
    size: usize,
    neighbors: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PredictOutcome {
    pub measure: SimilarityMeasure,
    pub suffix: String,
    pub metrics: SetMetrics,
    /// True when the local calibration set is the whole calibration set.
    pub marginal: bool,
    pub k_nn: usize,
    pub results_path: PathBuf,
    pub metrics_path: PathBuf,
}

/// Conformal prediction sets for every test graph under each configured measure.
pub fn run_predict(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Vec<PredictOutcome>> {
    let ckpt_path = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.checkpoint_path());
    if !ckpt_path.exists() {
        return Err(Error::State(format!(
            "no checkpoint at {}; run `topoconf train` first",
            ckpt_path.display()
        )));
    }
    let ckpt = load_checkpoint(&ckpt_path)?;
    let p = prepare(cfg)?;
    if ckpt.feature_hash != p.cache.feature_hash {
        return Err(Error::CacheVersion(format!(
            "checkpoint {} was trained on features {}, the cache holds {}",
            ckpt_path.display(),
            ckpt.feature_hash,
            p.cache.feature_hash
        )));
    }
    let model = &ckpt.model;
    let (calib_idx, test_idx) = (p.split.subset(Subset::Calib), p.split.subset(Subset::Test));
    if calib_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::State("calibration and test subsets must be nonempty".into()));
    }
    let refs = |idx: &[usize]| idx.iter().map(|&i| &p.samples[i]).collect::<Vec<_>>();
    let calib_probs = model.predict_proba(&refs(calib_idx))?;
    let test_probs = model.predict_proba(&refs(test_idx))?;
    let wants_embedding = cfg.conformal.measures.contains(&SimilarityMeasure::Embedding);
    let (calib_emb, test_emb) = if wants_embedding {
        let e = |idx: &[usize]| -> Result<Vec<Vec<f64>>> {
            Ok(model.embed(&refs(idx))?.into_iter().map(|g| g.z).collect())
        };
        (e(calib_idx)?, e(test_idx)?)
    } else {
        (Vec::new(), Vec::new())
    };
    let calib: Vec<CalibrationRecord> = calib_idx
        .iter()
        .enumerate()
        .map(|(pos, &gi)| {
            Ok(CalibrationRecord {
                index: gi,
                score: nonconformity_score(&calib_probs[pos], p.samples[gi].label)?,
                features: GraphFeatures {
                    diagrams: Some(&p.cache.diagrams[gi]),
                    embedding: calib_emb.get(pos).map(Vec::as_slice),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let k_nn = cfg.conformal.k_nn.resolve(calib.len());
    let marginal = k_nn >= calib.len();
    let alpha = cfg.conformal.alpha;
    let mut outcomes = Vec::new();
    for &measure in &cfg.conformal.measures {
        let sets = test_idx
            .par_iter()
            .enumerate()
            .map(|(pos, &gi)| {
                let target = GraphFeatures {
                    diagrams: Some(&p.cache.diagrams[gi]),
                    embedding: test_emb.get(pos).map(Vec::as_slice),
                };
                conditional_prediction_set(&test_probs[pos], &target, &calib, k_nn, measure, alpha)
            })
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = test_idx.iter().map(|&i| p.samples[i].label).collect();
        let metrics = evaluate_sets(sets.iter().map(|(s, _)| s).zip(labels.iter().copied()))?;
        let suffix = measure.suffix();
        let mode = if marginal { "marginal" } else { "conditional" };
        let records: Vec<ResultRecord> = sets
            .iter()
            .zip(test_idx)
            .zip(&labels)
            .map(|(((set, nb), &gi), &y)| ResultRecord {
                graph: gi,
                label: y,
                p_values: &set.p_values,
                set: &set.labels,
                size: set.len(),
                neighbors: nb.iter().map(|&pos| calib[pos].index).collect(),
            })
            .collect();
        let header = json!({
            "config_hash": cfg.config_hash(),
            "feature_hash": p.cache.feature_hash,
            "version": ARTIFACT_VERSION,
            "measure": suffix,
            "alpha": alpha,
            "k_nn": k_nn,
            "mode": mode,
        });
        let results_path = cfg.run_dir().join(format!("results_{suffix}.jsonl"));
        write_jsonl(&results_path, &header, &records)?;
        let metrics_path = cfg.run_dir().join(format!("metrics_{suffix}.txt"));
        let text = format!(
            "alpha={alpha}\ncoverage={}\navg_size={}\nsd_size={}\nn_test={}\nmeasure={suffix}\nmode={mode}\nk_nn={k_nn}\nconfig_hash={}\nversion={ARTIFACT_VERSION}\n",
            metrics.coverage,
            metrics.avg_size,
            metrics.sd_size,
            metrics.n,
            cfg.config_hash(),
        );
        fs::write(&metrics_path, text)?;
        outcomes.push(PredictOutcome {
            measure,
            suffix,
            metrics,
            marginal,
            k_nn,
            results_path,
            metrics_path,
        });
    }
    Ok(outcomes)
}
