//! Declarative experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use cgep_core::dataset::DatasetTag;
use cgep_model::model::CandidateContext;
use cgep_model::{AdamWConfig, Ablation, EncoderConfig, LossConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 2 layers, 64 hidden units.
    #[default]
    Toy,
    /// BERT-base shaped encoders.
    Pretrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run name; outputs go to `<runs_dir>/<name>`.
    pub name: String,
    pub dataset: DatasetTag,
    /// Directory written by `build` (and `splits`), relative to the workspace root.
    pub data_dir: PathBuf,
    #[serde(default = "default_runs_dir")]
    pub runs_dir: PathBuf,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// β
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// τ
    #[serde(default = "default_tau")]
    pub temperature: f64,
    /// λ, applied as decoupled weight decay.
    #[serde(default = "default_lambda")]
    pub weight_decay: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Defaults to 15 for ESC and 10 for MAVEN.
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Expected candidate-set size; defaults to the dataset's (256 or 512).
    #[serde(default)]
    pub candidates: Option<usize>,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub negatives: Option<usize>,
    #[serde(default)]
    pub candidate_context: CandidateContext,
    /// Stop training once an epoch's mean loss drops below this.
    #[serde(default)]
    pub stop_below: Option<f64>,
    /// Only run these cross-validation folds (all by default).
    #[serde(default)]
    pub folds: Option<Vec<usize>>,
}

fn default_runs_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_lr() -> f64 {
    5e-6
}
fn default_beta() -> f64 {
    0.5
}
fn default_tau() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    0.01
}
fn default_max_tokens() -> usize {
    200
}
fn default_batch() -> usize {
    1
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn new(name: impl Into<String>, dataset: DatasetTag, data_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            name: name.into(),
            dataset,
            data_dir: data_dir.into(),
            runs_dir: default_runs_dir(),
            profile: Profile::Toy,
            learning_rate: default_lr(),
            beta: default_beta(),
            temperature: default_tau(),
            weight_decay: default_lambda(),
            max_tokens: default_max_tokens(),
            batch_size: default_batch(),
            epochs: None,
            seed: 0,
            candidates: None,
            ablation: Ablation::default(),
            normalize: false,
            negatives: None,
            candidate_context: CandidateContext::Sentence,
            stop_below: None,
            folds: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name `{}` must be a plain directory name", self.name));
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.weight_decay < 0.0 {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 || self.max_tokens < 8 {
            return bad("batch_size must be >= 1 and max_tokens >= 8".into());
        }
        if self.epochs == Some(0) {
            return bad("epochs must be >= 1".into());
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(self.dataset.default_epochs())
    }

    pub fn candidate_set(&self) -> usize {
        self.candidates.unwrap_or(self.dataset.candidate_set())
    }

    pub fn encoder(&self, vocab_size: usize) -> EncoderConfig {
        match self.profile {
            Profile::Toy => EncoderConfig::toy(vocab_size),
            Profile::Pretrained => EncoderConfig::base(vocab_size),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs(),
            optimizer: AdamWConfig {
                lr: self.learning_rate,
                weight_decay: self.weight_decay,
                ..AdamWConfig::default()
            },
            loss: LossConfig {
                temperature: self.temperature,
                beta: self.beta,
                normalize: self.normalize,
                negatives: self.negatives,
            },
            grad_accum: self.batch_size,
            seed,
            stop_below: self.stop_below,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_training_setup() {
        let cfg: ExperimentConfig =
            toml::from_str("name = \"r\"\ndataset = \"esc\"\ndata_dir = \"d\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::new("r", DatasetTag::Esc, "d"));
        assert_eq!(cfg.learning_rate, 5e-6);
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.temperature, 1.0);
        assert_eq!(cfg.max_tokens, 200);
        assert_eq!(cfg.batch_size, 1);
        assert_eq!(cfg.epochs(), 15);
        assert_eq!(cfg.candidate_set(), 256);
        let maven = ExperimentConfig::new("r", DatasetTag::Maven, "d");
        assert_eq!((maven.epochs(), maven.candidate_set()), (10, 512));
    }

    #[test]
    fn roundtrip_and_validation() {
        let mut cfg = ExperimentConfig::new("r", DatasetTag::Maven, "d");
        cfg.ablation.no_ctxt = true;
        cfg.folds = Some(vec![0, 2]);
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        cfg.beta = -1.0;
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<ExperimentConfig>("name=\"r\"\ndataset=\"esc\"\ndata_dir=\"d\"\nbogus=1").is_err());
    }
}
