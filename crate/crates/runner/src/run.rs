//! Experiment orchestration: run directories, per-partition training and
//! testing, the script-event comparison and ablation sweeps.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use cgep_core::dataset::jsonl::{write_json, write_jsonl};
use cgep_core::dataset::{extract_sep_chains, sep_document_split};
use cgep_core::ecg::CgepInstance;
use cgep_core::metrics::{evaluate_run, MetricsTable, PredictionLine, RunReport, DELTA_WIDTH};
use cgep_core::tokenize::SpecialTokens;
use cgep_model::checkpoint;
use cgep_model::training::EpochLog;
use cgep_model::{
    predict, train, Ablation, ModelConfig, ParamStore, PreparedInstance, SedgplModel, Vocab,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::data::{partitions, select, Dataset, Partition};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "model.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_FILE: &str = "report.txt";

/// What makes a run reproducible, stored next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub package_version: String,
    /// `git describe` of the working tree, when available.
    pub code_version: String,
    pub dataset_dir: PathBuf,
    pub dataset_hash: String,
    pub config_hash: String,
    pub model_seed: u64,
    pub train_seeds: Vec<u64>,
    pub created_unix: u64,
}

pub fn code_version() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Model init seed and the training seed of each partition.
pub fn seeds(cfg: &ExperimentConfig, partitions: usize) -> (u64, Vec<u64>) {
    let train = (0..partitions as u64)
        .map(|i| cfg.seed.wrapping_add(1).wrapping_add(i))
        .collect();
    (cfg.seed, train)
}

/// `<root>/<runs_dir>/<name>` with the config snapshot and manifest written.
pub fn create_run_dir(root: &Path, cfg: &ExperimentConfig, ds: &Dataset, parts: usize) -> Result<PathBuf> {
    let dir = root.join(&cfg.runs_dir).join(&cfg.name);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let toml = cfg.to_toml();
    std::fs::write(dir.join(CONFIG_FILE), &toml)?;
    let (model_seed, train_seeds) = seeds(cfg, parts);
    let manifest = Manifest {
        name: cfg.name.clone(),
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        code_version: code_version(),
        dataset_dir: cfg.data_dir.clone(),
        dataset_hash: ds.hash.clone(),
        config_hash: sha256_hex(toml.as_bytes()),
        model_seed,
        train_seeds,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(dir)
}

pub fn vocab_for<'a>(instances: impl IntoIterator<Item = &'a CgepInstance>) -> Vocab {
    Vocab::from_instances(SpecialTokens::default(), instances)
}

pub fn build_model(
    cfg: &ExperimentConfig,
    vocab: Vocab,
    ablation: Ablation,
) -> (SedgplModel, ParamStore<f32>) {
    let config = ModelConfig {
        encoder: cfg.encoder(vocab.len()),
        max_tokens: cfg.max_tokens,
        ablation,
        candidate_context: cfg.candidate_context,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = SedgplModel::new(config, vocab, &mut store, &mut rng);
    (model, store)
}

/// Prepared instances plus the ones the model cannot encode.
pub fn prepare_all<'a>(
    model: &SedgplModel,
    instances: &'a [CgepInstance],
) -> (Vec<PreparedInstance>, Vec<&'a CgepInstance>) {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for inst in instances {
        match model.prepare(inst) {
            Ok(p) => ok.push(p),
            Err(e) => {
                log::warn!("skipping {}: {e}", inst.instance_id);
                skipped.push(inst);
            }
        }
    }
    (ok, skipped)
}

/// Rank every instance; those that cannot be encoded get no gold rank and so
/// fall back to the candidate-set size.
pub fn predict_all(
    model: &SedgplModel,
    store: &ParamStore<f32>,
    instances: &[CgepInstance],
    fold: Option<usize>,
) -> Result<Vec<PredictionLine>> {
    let (prepared, skipped) = prepare_all(model, instances);
    let mut lines = predict(model, store, &prepared, fold)?;
    lines.extend(skipped.into_iter().map(|inst| PredictionLine {
        instance_id: inst.instance_id.clone(),
        gold_rank: None,
        candidate_count: inst.candidates.len(),
        fold,
        top: Vec::new(),
    }));
    Ok(lines)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionResult {
    pub label: String,
    pub fold: Option<usize>,
    pub train_instances: usize,
    pub test_instances: usize,
    pub skipped: usize,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub metrics: MetricsTable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub variant: String,
    pub run_dir: PathBuf,
    pub partitions: Vec<PartitionResult>,
    pub report: RunReport,
}

/// Train on one partition, keep the best dev epoch, and dump test predictions.
pub fn fit_and_test(
    cfg: &ExperimentConfig,
    vocab: &Vocab,
    part: &Partition,
    train_seed: u64,
    dir: &Path,
) -> Result<(PartitionResult, Vec<PredictionLine>)> {
    std::fs::create_dir_all(dir)?;
    let (model, mut store) = build_model(cfg, vocab.clone(), cfg.ablation);
    let (train_set, skipped_train) = prepare_all(&model, &part.train);
    let (dev_set, _) = prepare_all(&model, &part.dev);
    if train_set.is_empty() {
        bail!("partition {} has no usable training instances", part.label);
    }
    log::info!(
        "{}: {} train / {} dev / {} test instances",
        part.label,
        train_set.len(),
        dev_set.len(),
        part.test.len()
    );
    let outcome = train(&model, &mut store, &train_set, &dev_set, &cfg.train_config(train_seed))?;
    write_jsonl(&dir.join(LOG_FILE), &outcome.log)?;
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &model, &outcome.best)?;
    let lines = predict_all(&model, &outcome.best, &part.test, part.fold)?;
    write_jsonl(&dir.join(PREDICTIONS_FILE), &lines)?;
    let records: Vec<_> = lines.iter().map(PredictionLine::record).collect();
    let metrics = if records.is_empty() {
        bail!("partition {} has no test instances", part.label);
    } else {
        MetricsTable::compute(&records, None)?
    };
    let skipped = skipped_train.len() + lines.iter().filter(|l| l.gold_rank.is_none()).count();
    Ok((
        PartitionResult {
            label: part.label.clone(),
            fold: part.fold,
            train_instances: train_set.len(),
            test_instances: lines.len(),
            skipped,
            best_epoch: outcome.best_epoch,
            log: outcome.log,
            metrics,
        },
        lines,
    ))
}

/// `train --config`: every partition, then the aggregated report.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let ds = Dataset::load(&root.join(&cfg.data_dir))?;
    ds.check(cfg)?;
    let parts = partitions(&ds, cfg)?;
    let dir = create_run_dir(root, cfg, &ds, parts.len())?;
    let vocab = vocab_for(&ds.instances);
    let (_, train_seeds) = seeds(cfg, parts.len());
    let mut results = Vec::new();
    let mut dump = Vec::new();
    for (part, seed) in parts.iter().zip(train_seeds) {
        let (result, lines) = fit_and_test(cfg, &vocab, part, seed, &dir.join(&part.label))?;
        log::info!("{}: MRR {:.2}", part.label, result.metrics.mrr);
        results.push(result);
        dump.extend(lines);
    }
    let ids: BTreeSet<String> = dump.iter().map(|l| l.instance_id.clone()).collect();
    let folds = if parts.iter().any(|p| p.fold.is_some()) {
        parts.len().max(2)
    } else {
        1
    };
    let report = evaluate_run(&dump, &ids, folds)?;
    write_jsonl(&dir.join(PREDICTIONS_FILE), &dump)?;
    write_json(&dir.join(METRICS_FILE), &report)?;
    std::fs::write(dir.join(REPORT_FILE), format!("{report}\n"))?;
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        variant: cfg.ablation.label(),
        run_dir: dir,
        partitions: results,
        report,
    })
}

/// Locate the run config that produced a checkpoint: the checkpoint's
/// directory or its parent.
pub fn config_for_checkpoint(ckpt: &Path) -> Result<PathBuf> {
    let mut dir = ckpt.parent();
    for _ in 0..2 {
        let Some(d) = dir else { break };
        let candidate = d.join(CONFIG_FILE);
        if candidate.exists() {
            return Ok(candidate);
        }
        dir = d.parent();
    }
    bail!("no {CONFIG_FILE} next to {}; pass --config", ckpt.display())
}

/// Fold index encoded in a checkpoint path such as `runs/x/fold3/model.json`.
pub fn fold_of_checkpoint(ckpt: &Path) -> Option<usize> {
    ckpt.parent()?
        .file_name()?
        .to_str()?
        .strip_prefix("fold")?
        .parse()
        .ok()
}

/// `eval --ckpt --split`: rank one split with a saved model.
pub fn evaluate_checkpoint(
    ckpt: &Path,
    instances: &[CgepInstance],
    fold: Option<usize>,
) -> Result<(Vec<PredictionLine>, MetricsTable)> {
    if instances.is_empty() {
        bail!("split has no instances");
    }
    let (model, store) = checkpoint::load(ckpt)?;
    let lines = predict_all(&model, &store, instances, fold)?;
    let records: Vec<_> = lines.iter().map(PredictionLine::record).collect();
    let table = MetricsTable::compute(&records, None)?;
    Ok((lines, table))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SepReport {
    pub run_dir: PathBuf,
    pub instances: usize,
    pub cgep: MetricsTable,
    pub sep: MetricsTable,
}

impl SepReport {
    /// Both rows, the script-event one with its change against the graph input.
    pub fn table(&self) -> String {
        format!(
            "{}\n{}\n{}",
            MetricsTable::header_width(DELTA_WIDTH),
            self.cgep.row_width("CGEP", DELTA_WIDTH),
            self.sep.delta_row("SEP", &self.cgep)
        )
    }
}

/// `sep --config`: the same pipeline on longest-chain inputs, compared with
/// graph inputs on the very same instances and document split.
pub fn run_sep(cfg: &ExperimentConfig, root: &Path) -> Result<SepReport> {
    cfg.validate()?;
    let ds = Dataset::load(&root.join(&cfg.data_dir))?;
    ds.check(cfg)?;
    let sep: Vec<CgepInstance> = ds
        .instances
        .iter()
        .filter_map(extract_sep_chains)
        .map(|s| s.to_cgep())
        .collect();
    if sep.is_empty() {
        bail!("no instance has a causal chain long enough for script event prediction");
    }
    let kept: BTreeSet<&str> = sep.iter().map(|s| s.instance_id.as_str()).collect();
    let cgep: Vec<CgepInstance> = ds
        .instances
        .iter()
        .filter(|i| kept.contains(i.instance_id.as_str()))
        .cloned()
        .collect();
    let docs: Vec<String> = sep.iter().map(|s| s.doc_id.clone()).collect();
    let split = sep_document_split(&docs, cfg.seed);
    let mut sep_cfg = cfg.clone();
    sep_cfg.name = format!("{}-sep", cfg.name);
    let dir = create_run_dir(root, &sep_cfg, &ds, 2)?;
    write_jsonl(&dir.join("sep_instances.jsonl"), &sep)?;
    write_json(&dir.join("sep_split.json"), &split)?;
    let vocab = vocab_for(cgep.iter().chain(&sep));
    let (_, seeds) = seeds(cfg, 1);
    let mut tables = Vec::new();
    for (label, set) in [("cgep", &cgep), ("sep", &sep)] {
        let part = Partition {
            label: label.to_string(),
            fold: None,
            train: select(set, &split.train),
            dev: select(set, &split.dev),
            test: select(set, &split.test),
        };
        let (result, _) = fit_and_test(cfg, &vocab, &part, seeds[0], &dir.join(label))?;
        tables.push(result.metrics);
    }
    let sep_metrics = tables.pop().unwrap();
    let report = SepReport {
        run_dir: dir.clone(),
        instances: sep.len(),
        cgep: tables.pop().unwrap(),
        sep: sep_metrics,
    };
    write_json(&dir.join(METRICS_FILE), &report)?;
    std::fs::write(dir.join(REPORT_FILE), format!("{}\n", report.table()))?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub full: ExperimentReport,
    pub variants: Vec<ExperimentReport>,
}

impl AblationReport {
    pub fn table(&self) -> String {
        let mut lines = vec![
            MetricsTable::header_width(DELTA_WIDTH),
            self.full.report.overall.row_width("SeDGPL", DELTA_WIDTH),
        ];
        for v in &self.variants {
            lines.push(v.report.overall.delta_row(&v.variant, &self.full.report.overall));
        }
        lines.join("\n")
    }
}

pub const ABLATION_FLAGS: [&str; 4] = ["no_dist", "no_ctxt", "no_schm", "no_ctrst"];

/// `ablate --flag`: the full model and each requested single-switch variant.
pub fn run_ablation(cfg: &ExperimentConfig, root: &Path, flags: &[String]) -> Result<AblationReport> {
    let flags: Vec<&str> = if flags.iter().any(|f| f == "all") {
        ABLATION_FLAGS.to_vec()
    } else {
        flags.iter().map(String::as_str).collect()
    };
    let mut variants = Vec::new();
    let mut full_cfg = cfg.clone();
    full_cfg.ablation = Ablation::default();
    let full = run_experiment(&full_cfg, root)?;
    for flag in flags {
        let ablation = Ablation::from_flag(flag)
            .with_context(|| format!("unknown ablation flag `{flag}`"))?;
        let mut v = cfg.clone();
        v.ablation = ablation;
        v.name = format!("{}-{flag}", cfg.name);
        variants.push(run_experiment(&v, root)?);
    }
    let report = AblationReport { full, variants };
    let dir = root.join(&cfg.runs_dir).join(format!("{}-ablation", cfg.name));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(REPORT_FILE), format!("{}\n", report.table()))?;
    Ok(report)
}
