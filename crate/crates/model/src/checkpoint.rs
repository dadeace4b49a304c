//! Save and restore a trained model as a single JSON document.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ModelConfig, SedgplModel};
use crate::params::ParamStore;
use crate::tensor::Matrix;
use crate::vocab::Vocab;

pub const FORMAT: &str = "cgep-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a checkpoint (format `{format}`, version {version})")]
    Format { format: String, version: u32 },
    #[error("config hash mismatch: stored {stored}, computed {computed}")]
    Hash { stored: String, computed: String },
    #[error("parameter `{0}` missing from checkpoint")]
    Missing(String),
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    Shape {
        name: String,
        got: (usize, usize),
        expected: (usize, usize),
    },
}

#[derive(Serialize, Deserialize)]
struct NamedParam {
    name: String,
    value: Matrix<f32>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    config_hash: String,
    config: ModelConfig,
    vocab: Vocab,
    params: Vec<NamedParam>,
}

/// sha256 of the canonical JSON of `config`.
pub fn config_hash(config: &ModelConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save(path: &Path, model: &SedgplModel, store: &ParamStore<f32>) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let doc = Document {
        format: FORMAT.to_string(),
        version: VERSION,
        config_hash: config_hash(&model.config),
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        params: store
            .ids()
            .map(|id| NamedParam {
                name: store.name(id).to_string(),
                value: store.value(id).clone(),
            })
            .collect(),
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer(&mut w, &doc)?;
    w.flush().map_err(io)
}

pub fn load(path: &Path) -> Result<(SedgplModel, ParamStore<f32>), CheckpointError> {
    let file = File::open(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let doc: Document = serde_json::from_reader(BufReader::new(file))?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(CheckpointError::Format {
            format: doc.format,
            version: doc.version,
        });
    }
    let computed = config_hash(&doc.config);
    if computed != doc.config_hash {
        return Err(CheckpointError::Hash {
            stored: doc.config_hash,
            computed,
        });
    }
    // rebuild the parameter layout, then overwrite every value by name
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = SedgplModel::new(doc.config, doc.vocab, &mut store, &mut rng);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let stored = doc
            .params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| CheckpointError::Missing(name.clone()))?;
        let expected = store.value(id).shape();
        if stored.value.shape() != expected {
            return Err(CheckpointError::Shape {
                name,
                got: stored.value.shape(),
                expected,
            });
        }
        *store.value_mut(id) = stored.value.clone();
    }
    Ok((model, store))
}
