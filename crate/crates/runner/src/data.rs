//! Dataset directories: what `build` writes and what experiments read.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cgep_core::dataset::jsonl::{read_json, read_jsonl, write_json, write_jsonl};
use cgep_core::dataset::{BuiltDataset, DatasetStats, DocumentMeta, SplitAssignment};
use cgep_core::ecg::CgepInstance;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const INSTANCES: &str = "instances.jsonl";
pub const DOCUMENTS: &str = "documents.jsonl";
pub const GRAPHS: &str = "graphs.jsonl";
pub const STATS: &str = "stats.json";
pub const SPLITS: &str = "splits.json";

pub fn write_built(dir: &Path, built: &BuiltDataset) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_jsonl(&dir.join(INSTANCES), &built.instances)?;
    write_jsonl(&dir.join(DOCUMENTS), &built.documents)?;
    write_jsonl(&dir.join(GRAPHS), &built.graphs)?;
    write_json(&dir.join(STATS), &built.stats)?;
    Ok(())
}

pub fn read_instances(dir: &Path) -> Result<Vec<CgepInstance>> {
    let path = dir.join(INSTANCES);
    read_jsonl(&path).with_context(|| format!("reading dataset {}", path.display()))
}

pub fn read_documents(dir: &Path) -> Result<Vec<DocumentMeta>> {
    let path = dir.join(DOCUMENTS);
    read_jsonl(&path).with_context(|| format!("reading documents {}", path.display()))
}

pub fn stats(dir: &Path) -> Result<DatasetStats> {
    Ok(DatasetStats::from_instances(&read_instances(dir)?))
}

/// sha256 over the named files' bytes, in order; missing files hash as empty.
pub fn hash_files(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = match std::fs::read(p) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e).with_context(|| format!("hashing {}", p.display())),
        };
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub instances: Vec<CgepInstance>,
    pub splits: Option<SplitAssignment>,
    /// Hash of the instance file and the split file.
    pub hash: String,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let instances = read_instances(dir)?;
        let split_path = dir.join(SPLITS);
        let splits = if split_path.exists() {
            Some(read_json(&split_path)?)
        } else {
            None
        };
        let hash = hash_files(&[dir.join(INSTANCES), split_path])?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            instances,
            splits,
            hash,
        })
    }

    /// Every instance must carry exactly the configured number of candidates.
    pub fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        let k = cfg.candidate_set();
        for inst in &self.instances {
            if let Err(e) = inst.validate(Some(k)) {
                bail!(
                    "dataset {} does not match a {:?} config with {k} candidates: {e}",
                    self.dir.display(),
                    cfg.dataset
                );
            }
        }
        if let Some(s) = &self.splits {
            if s.dataset != cfg.dataset {
                bail!("splits are for {:?}, config says {:?}", s.dataset, cfg.dataset);
            }
        }
        Ok(())
    }

    pub fn require_splits(&self) -> Result<&SplitAssignment> {
        self.splits.as_ref().with_context(|| {
            format!(
                "no {SPLITS} in {}; run `cgep splits` first",
                self.dir.display()
            )
        })
    }

    pub fn select(&self, docs: &[String]) -> Vec<CgepInstance> {
        select(&self.instances, docs)
    }
}

pub fn select(instances: &[CgepInstance], docs: &[String]) -> Vec<CgepInstance> {
    let keep: BTreeSet<&str> = docs.iter().map(String::as_str).collect();
    instances
        .iter()
        .filter(|i| keep.contains(i.doc_id.as_str()))
        .cloned()
        .collect()
}

/// One train/dev/test arrangement; ESC yields one per fold.
#[derive(Clone, Debug)]
pub struct Partition {
    pub label: String,
    pub fold: Option<usize>,
    pub train: Vec<CgepInstance>,
    pub dev: Vec<CgepInstance>,
    pub test: Vec<CgepInstance>,
}

pub fn partitions(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<Partition>> {
    let splits = ds.require_splits()?;
    if splits.folds.is_empty() {
        return Ok(vec![Partition {
            label: "main".into(),
            fold: None,
            train: ds.select(&splits.train),
            dev: ds.select(&splits.dev),
            test: ds.select(&splits.test),
        }]);
    }
    let wanted: Vec<usize> = match &cfg.folds {
        Some(f) => f.clone(),
        None => (0..splits.folds.len()).collect(),
    };
    wanted
        .into_iter()
        .map(|i| {
            let fold = splits
                .folds
                .get(i)
                .with_context(|| format!("fold {i} not found ({} folds)", splits.folds.len()))?;
            Ok(Partition {
                label: format!("fold{i}"),
                fold: Some(i),
                train: ds.select(&fold.train),
                dev: ds.select(&splits.dev),
                test: ds.select(&fold.test),
            })
        })
        .collect()
}

/// Instances of a named split: `train`, `dev` or `test`, within `fold` for
/// cross-validated data.
pub fn split_instances(ds: &Dataset, split: &str, fold: Option<usize>) -> Result<Vec<CgepInstance>> {
    let s = ds.require_splits()?;
    let fold_ref = match (s.folds.is_empty(), fold) {
        (true, _) => None,
        (false, Some(i)) => Some(
            s.folds
                .get(i)
                .with_context(|| format!("fold {i} not found ({} folds)", s.folds.len()))?,
        ),
        (false, None) if split == "dev" => None,
        (false, None) => bail!("dataset is cross-validated; pass --fold"),
    };
    let docs = match (split, fold_ref) {
        ("train", None) => &s.train,
        ("train", Some(f)) => &f.train,
        ("dev", _) => &s.dev,
        ("test", None) => &s.test,
        ("test", Some(f)) => &f.test,
        (other, _) => bail!("split `{other}` not found (expected train, dev or test)"),
    };
    Ok(ds.select(docs))
}
