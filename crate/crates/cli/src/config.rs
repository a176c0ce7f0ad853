//! Pipeline configuration file (TOML). Relative paths are resolved against
//! the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqtag_core::harem::{Scenario, ScenarioName};
use seqtag_core::tagger::Head;
use seqtag_core::{Error, Result, SpanConfig, TagSet, TrainConfig};

pub const CONFIG_ENV: &str = "SEQTAG_CONFIG";
pub const DEFAULT_SEED: u64 = 13;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub vocab: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// External emission scores for the training documents.
    pub train_emissions: Option<PathBuf>,
    pub dev_emissions: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tagging {
    /// Takes precedence over `scenario`.
    pub classes: Option<Vec<String>>,
    pub scenario: Option<ScenarioName>,
    /// Share of training documents held out when no dev file is given.
    pub dev_fraction: f64,
}

/// Training options; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_encoder: Option<f64>,
    pub lr_head: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub weight_decay: Option<f64>,
    pub momentum: Option<f64>,
    pub o_tag_bias_init: Option<f64>,
    pub o_tag_loss_weight: Option<f64>,
    pub head: Option<Head>,
    pub embedding_dim: Option<usize>,
    /// Defaults to a value derived from the global seed.
    pub seed: Option<u64>,
    /// Use scores from `paths.train_emissions` instead of the toy encoder.
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub per_class: bool,
    pub resamples: usize,
    pub filter_pred: bool,
    pub seed: Option<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            per_class: false,
            resamples: 2000,
            filter_pred: true,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub span: SpanConfig,
    pub tagging: Tagging,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: DEFAULT_SEED,
            paths: Paths::default(),
            span: SpanConfig::default(),
            tagging: Tagging::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Seed for a named consumer, derived from the global seed.
pub fn derive_seed(global: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: t.epochs.unwrap_or(d.epochs),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            lr_encoder: t.lr_encoder.unwrap_or(d.lr_encoder),
            lr_head: t.lr_head.unwrap_or(d.lr_head),
            warmup_fraction: t.warmup_fraction.unwrap_or(d.warmup_fraction),
            weight_decay: t.weight_decay.unwrap_or(d.weight_decay),
            momentum: t.momentum.unwrap_or(d.momentum),
            o_tag_bias_init: t.o_tag_bias_init.unwrap_or(d.o_tag_bias_init),
            o_tag_loss_weight: t.o_tag_loss_weight.unwrap_or(d.o_tag_loss_weight),
            head: t.head.unwrap_or(d.head),
            embedding_dim: t.embedding_dim.unwrap_or(d.embedding_dim),
            seed: t.seed.unwrap_or_else(|| derive_seed(self.seed, "train")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Tag set from `classes` or `scenario`, if either is set.
    pub fn tagset(&self) -> Result<Option<TagSet>> {
        if let Some(c) = &self.tagging.classes {
            return TagSet::new(c.iter().cloned()).map(Some);
        }
        Ok(self.tagging.scenario.map(|s| Scenario::new(s).tagset()))
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.vocab,
            &mut self.train,
            &mut self.dev,
            &mut self.model,
            &mut self.train_emissions,
            &mut self.dev_emissions,
            &mut self.report,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
