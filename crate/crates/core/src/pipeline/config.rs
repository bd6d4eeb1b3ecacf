use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filtration::FiltrationKind;
use crate::model::ModelConfig;
use crate::persistence::{PiConfig, SimilarityMeasure};

/// Environment variable that overrides `output.cache_dir`.
pub const CACHE_DIR_ENV: &str = "TOPOCONF_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// A TUDataset directory `{path}/{name}/{name}_*.txt`.
    Tudataset,
    /// Trees versus single-cycle graphs, see [`crate::graph::synthetic`].
    SyntheticSeparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    pub kind: DatasetKind,
    pub synthetic_count: usize,
    pub synthetic_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "MUTAG".into(),
            path: PathBuf::from("data"),
            kind: DatasetKind::Tudataset,
            synthetic_count: 80,
            synthetic_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Fractions for (train, valid, calib, test).
    pub ratios: [f64; 4],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [0.5, 0.09, 0.21, 0.2],
            seed: 0,
        }
    }
}

/// Death value substituted for essential classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssentialDeath {
    /// Maximum filtration value of the graph itself.
    #[default]
    GraphMax,
    /// Maximum filtration value over every graph of the dataset.
    DatasetMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub filtrations: Vec<FiltrationKind>,
    pub resolution: usize,
    pub bandwidth_factor: f64,
    pub grid_padding: f64,
    pub essential_death: EssentialDeath,
    /// Featurisation threads; 0 uses one per core.
    pub workers: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let pi = PiConfig::default();
        Self {
            filtrations: pi.filtrations,
            resolution: pi.resolution,
            bandwidth_factor: pi.bandwidth_factor,
            grid_padding: pi.grid_padding,
            essential_death: EssentialDeath::default(),
            workers: 0,
        }
    }
}

impl FeatureConfig {
    pub fn pi_config(&self) -> PiConfig {
        PiConfig {
            filtrations: self.filtrations.clone(),
            resolution: self.resolution,
            bandwidth_factor: self.bandwidth_factor,
            grid_padding: self.grid_padding,
        }
    }
}

/// Size of the local calibration set: a count or every calibration graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbours {
    All,
    Count(usize),
}

impl Neighbours {
    /// Effective count for a calibration set of `m` graphs.
    pub fn resolve(self, m: usize) -> usize {
        match self {
            Neighbours::All => m,
            Neighbours::Count(k) => k.min(m),
        }
    }
}

impl Serialize for Neighbours {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Neighbours::All => s.serialize_str("all"),
            Neighbours::Count(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Neighbours {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Neighbours;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive integer or \"all\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Neighbours, E> {
                if v == 0 {
                    return Err(E::custom("k_nn must be positive"));
                }
                Ok(Neighbours::Count(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Neighbours, E> {
                if v <= 0 {
                    return Err(E::custom("k_nn must be positive"));
                }
                self.visit_u64(v as u64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Neighbours, E> {
                if v.eq_ignore_ascii_case("all") {
                    Ok(Neighbours::All)
                } else {
                    Err(E::custom(format!("unknown k_nn value {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalConfig {
    pub alpha: f64,
    pub k_nn: Neighbours,
    /// One results file is written per measure.
    pub measures: Vec<SimilarityMeasure>,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            k_nn: Neighbours::Count(80),
            measures: vec![SimilarityMeasure::Topological, SimilarityMeasure::Embedding],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub cache_dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            cache_dir: PathBuf::from(".topoconf-cache"),
        }
    }
}

/// Everything one featurize → train → predict run needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub conformal: ConformalConfig,
    pub output: OutputConfig,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Sets `a.b.c = value` in a TOML table, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override key {key:?}")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_override_value(value.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::from_table(toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?)
    }

    fn from_table(t: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(t)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the config file (defaults when `path` is `None`) and applies
    /// `key=value` overrides in order; each override is logged.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Format {
                    path: p.to_path_buf(),
                    msg: e.to_string(),
                })?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Format {
                    path: p.to_path_buf(),
                    msg: e.to_string(),
                })?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
            log::info!("config override: {o}");
        }
        Self::from_table(table)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let r = self.split.ratios;
        if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split.ratios must be fractions summing to 1, got {r:?}"));
        }
        if self.features.filtrations.is_empty() || self.features.resolution == 0 {
            return bad("features.filtrations must be nonempty and features.resolution positive".into());
        }
        if !(self.features.bandwidth_factor > 0.0) || !(self.features.grid_padding >= 0.0) {
            return bad("features.bandwidth_factor must be positive and grid_padding nonnegative".into());
        }
        if !(self.conformal.alpha > 0.0 && self.conformal.alpha < 1.0) {
            return bad(format!(
                "conformal.alpha must lie in (0, 1), got {}",
                self.conformal.alpha
            ));
        }
        if self.conformal.measures.is_empty() {
            return bad("conformal.measures must list at least one measure".into());
        }
        if self.dataset.name.is_empty() || self.dataset.name.contains(['/', '\\']) {
            return bad(format!("invalid dataset name {:?}", self.dataset.name));
        }
        self.model.validate()
    }

    /// Hash of everything that determines the feature cache contents.
    pub fn feature_hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            format: u8,
            dataset: &'a DatasetConfig,
            split: &'a SplitConfig,
            filtrations: &'a [FiltrationKind],
            resolution: usize,
            bandwidth_factor: f64,
            grid_padding: f64,
            essential_death: EssentialDeath,
        }
        let f = &self.features;
        let key = Key {
            format: super::cache::CACHE_VERSION,
            dataset: &self.dataset,
            split: &self.split,
            filtrations: &f.filtrations,
            resolution: f.resolution,
            bandwidth_factor: f.bandwidth_factor,
            grid_padding: f.grid_padding,
            essential_death: f.essential_death,
        };
        hex_digest(&serde_json::to_vec(&serde_json::to_value(&key).expect("serialisable")).expect("serialisable"))
    }

    /// Hash of the canonicalised experiment content with sorted keys. The worker
    /// count and output locations are left out.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.features.workers = 0;
        c.output = OutputConfig::default();
        let v = serde_json::to_value(&c).expect("serialisable");
        hex_digest(&serde_json::to_vec(&v).expect("serialisable"))
    }

    /// Cache directory, honouring [`CACHE_DIR_ENV`].
    pub fn cache_dir(&self) -> PathBuf {
        std::env::var_os(CACHE_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output.cache_dir.clone())
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache_dir()
            .join(format!("{}_{}.tcache", self.dataset.name, &self.feature_hash()[..16]))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.dir.join(&self.dataset.name)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.run_dir().join("checkpoint.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = ExperimentConfig::default();
        let s = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&s).unwrap(), c);
        assert_eq!(c.conformal.alpha, 0.1);
        assert_eq!(c.model.train.epochs, 100);
    }

    #[test]
    fn overrides_are_typed() {
        let c = ExperimentConfig::load(
            None,
            &[
                "model.train.epochs=3".into(),
                "conformal.k_nn=all".into(),
                "dataset.name=PROTEINS".into(),
                "features.resolution = 10".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.model.train.epochs, 3);
        assert_eq!(c.conformal.k_nn, Neighbours::All);
        assert_eq!(c.dataset.name, "PROTEINS");
        assert_eq!(c.features.resolution, 10);
        assert!(ExperimentConfig::load(None, &["model.nope=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["novalue".into()]).is_err());
    }

    #[test]
    fn hashes_track_relevant_fields() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.features.workers = 7;
        b.output.dir = "elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.feature_hash(), b.feature_hash());
        b.features.resolution = 10;
        assert_ne!(a.feature_hash(), b.feature_hash());
        let mut c = a.clone();
        c.model.seed = 1;
        assert_eq!(a.feature_hash(), c.feature_hash());
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("[conformal]\nalpha = 1.5").is_err());
        assert!(ExperimentConfig::from_toml_str("[split]\nratios = [0.5, 0.5, 0.5, 0.5]").is_err());
        assert!(ExperimentConfig::from_toml_str("[conformal]\nk_nn = 0").is_err());
    }
}
