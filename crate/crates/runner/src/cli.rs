//! The `cgep` command line.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cgep_core::dataset::jsonl::{read_jsonl, write_json, write_jsonl};
use cgep_core::dataset::{
    build_dataset, extract_sep_chains, ingest, make_splits, sep_document_split, BuildOptions,
    CorpusFormat, DatasetStats, DatasetTag,
};
use cgep_core::ecg::CgepInstance;
use cgep_core::linearize::{assign_distances, extract_triples, linearize, TripleOrder};
use cgep_core::llm::{
    evaluate_llm, HttpTransport, MatchMode, RecordingTransport, ReplayTransport, Transport,
};
use cgep_core::metrics::{evaluate_run, MetricsTable, PredictionLine};
use cgep_core::synth::{esc_record, synth_corpus, SynthConfig};
use cgep_core::tokenize::{SpecialTokens, WordTokenizer};
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::data::{self, Dataset};
use crate::run;

#[derive(Debug, Parser)]
#[command(name = "cgep", version, about = "Causality graph event prediction experiments")]
pub struct Cli {
    /// Workspace root; config paths are resolved against it.
    #[arg(long, global = true, default_value = ".")]
    pub root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset from an annotated corpus.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        format: CorpusFormat,
        /// Candidates per instance (256 for esc, 512 for maven by default).
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus in the `esc` dialect.
    Synth {
        #[arg(long, default_value_t = 24)]
        docs: usize,
        #[arg(long, default_value_t = 8)]
        topics: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write train/dev/test (and fold) assignments next to a built dataset.
    Splits {
        #[arg(long)]
        dataset: DatasetTag,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Derive the script-event dataset (`--in/--out`) or run the comparison (`--config`).
    Sep {
        #[arg(long = "in", requires = "out", conflicts_with = "config")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print dataset statistics.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Render the graph template of one instance.
    Linearize {
        /// JSON or JSONL file of instances.
        #[arg(long)]
        instance: PathBuf,
        /// Instance id (the first instance by default).
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        max_tokens: Option<usize>,
    },
    /// Score a prediction dump.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        folds: usize,
        /// Machine-readable report (default: `<pred>.metrics.json`).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Zero-shot LLM baseline, replayed from stored exchanges by default.
    LlmEval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        replay: PathBuf,
        #[arg(long, default_value = "gpt-4")]
        model: String,
        /// Query the live endpoint and store every exchange in the replay dir.
        #[arg(long)]
        record: bool,
        #[arg(long)]
        loose: bool,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Train (and test) every partition of a config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// train, dev or test
        #[arg(long)]
        split: String,
        /// Defaults to the config stored in the checkpoint's run directory.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Cross-validation fold (defaults to the checkpoint's `foldN` directory).
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Compare the full model with ablated variants.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// no_dist, no_ctxt, no_schm, no_ctrst or all; repeatable.
        #[arg(long = "flag", required = true)]
        flags: Vec<String>,
    },
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string(value).expect("json value"));
}

fn load_config(root: &Path, path: &Path) -> Result<ExperimentConfig> {
    let path = if path.is_absolute() { path.to_path_buf() } else { root.join(path) };
    Ok(ExperimentConfig::load(&path)?)
}

fn read_instances_file(path: &Path) -> Result<Vec<CgepInstance>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(one) = serde_json::from_str::<CgepInstance>(&text) {
        return Ok(vec![one]);
    }
    Ok(read_jsonl(path)?)
}

pub fn execute(cli: Cli) -> Result<()> {
    let root = cli.root;
    match cli.command {
        Command::Build {
            corpus,
            format,
            candidates,
            seed,
            out,
        } => {
            let k = candidates.unwrap_or(match format {
                CorpusFormat::Esc => DatasetTag::Esc.candidate_set(),
                CorpusFormat::Maven => DatasetTag::Maven.candidate_set(),
            });
            let docs = ingest(&corpus, format)?;
            let built = build_dataset(&docs, &BuildOptions::new(k, seed))?;
            data::write_built(&out, &built)?;
            println!("{}", built.stats.table(&dir_label(&out)));
        }
        Command::Synth {
            docs,
            topics,
            seed,
            out,
        } => {
            let corpus = synth_corpus(&SynthConfig {
                docs,
                topics,
                seed,
                ..SynthConfig::default()
            });
            let lines: Vec<String> = corpus.iter().map(|d| esc_record(d).to_string()).collect();
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&out, lines.join("\n") + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Splits { dataset, seed, input } => {
            let docs = data::read_documents(&input)?;
            let splits = make_splits(&docs, dataset, seed)?;
            write_json(&input.join(data::SPLITS), &splits)?;
            print_json(&json!({
                "train": splits.train.len(),
                "dev": splits.dev.len(),
                "test": splits.test.len(),
                "folds": splits.folds.iter().map(|f| f.test.len()).collect::<Vec<_>>(),
            }));
        }
        Command::Sep {
            input,
            out,
            config,
            seed,
        } => match (input, out, config) {
            (Some(input), Some(out), None) => {
                let instances = data::read_instances(&input)?;
                let sep: Vec<_> = instances.iter().filter_map(extract_sep_chains).collect();
                let docs: Vec<String> = sep.iter().map(|s| s.doc_id.clone()).collect();
                let split = sep_document_split(&docs, seed);
                std::fs::create_dir_all(&out)?;
                write_jsonl(&out.join("sep.jsonl"), &sep)?;
                let as_cgep: Vec<CgepInstance> = sep.iter().map(|s| s.to_cgep()).collect();
                write_jsonl(&out.join(data::INSTANCES), &as_cgep)?;
                write_json(&out.join("sep_split.json"), &split)?;
                println!("{}", DatasetStats::from_instances(&as_cgep).table("SEP"));
            }
            (None, None, Some(config)) => {
                let cfg = load_config(&root, &config)?;
                let report = run::run_sep(&cfg, &root)?;
                println!("{}", report.table());
            }
            _ => bail!("sep needs either --in and --out, or --config"),
        },
        Command::Stats { input } => {
            let stats = data::stats(&input)?;
            println!("{}", stats.table(&dir_label(&input)));
        }
        Command::Linearize {
            instance,
            id,
            max_tokens,
        } => {
            let all = read_instances_file(&instance)?;
            let inst = match &id {
                Some(id) => all.iter().find(|i| &i.instance_id == id),
                None => all.first(),
            }
            .context("instance not found")?;
            let tok = WordTokenizer::new(SpecialTokens::default(), false);
            let lin = linearize(&inst.graph, &inst.anchor_id, TripleOrder::Distance, max_tokens, &tok)?;
            println!("{}", lin.mention.text());
            println!("{}", lin.schema.text());
            println!("{:<10}{:<28}effect", "distance", "cause");
            let triples = assign_distances(extract_triples(&inst.graph), &inst.graph, &inst.anchor_id)?;
            for t in triples {
                let cause = format!("{} ({})", t.cause_mention, t.cause_id);
                println!(
                    "{:<10}{cause:<28}{} ({})",
                    t.distance.unwrap_or(0),
                    t.effect_mention,
                    t.effect_id
                );
            }
            if lin.mention.dropped > 0 {
                println!("dropped {} triple(s) over the token budget", lin.mention.dropped);
            }
        }
        Command::Score {
            pred,
            data: dir,
            folds,
            json,
        } => {
            let dump: Vec<PredictionLine> = read_jsonl(&pred)?;
            let ids: BTreeSet<String> = data::read_instances(&dir)?
                .into_iter()
                .map(|i| i.instance_id)
                .collect();
            let report = evaluate_run(&dump, &ids, folds)?;
            println!("{report}");
            let out = json.unwrap_or_else(|| pred.with_extension("metrics.json"));
            write_json(&out, &report)?;
        }
        Command::LlmEval {
            data: dir,
            replay,
            model,
            record,
            loose,
            limit,
        } => {
            let mut instances = data::read_instances(&dir)?;
            if let Some(n) = limit {
                instances.truncate(n);
            }
            let mode = if loose { MatchMode::Loose } else { MatchMode::Exact };
            let mut transport: Box<dyn Transport> = if record {
                std::fs::create_dir_all(&replay)?;
                Box::new(RecordingTransport::new(HttpTransport::from_env()?, &replay))
            } else {
                Box::new(ReplayTransport::open(&replay)?)
            };
            let records = evaluate_llm(&instances, transport.as_mut(), &model, mode)?;
            let table = MetricsTable::compute(&records, None)?;
            println!("{}\n{}", MetricsTable::header(), table.row(&model));
        }
        Command::Train { config } => {
            let cfg = load_config(&root, &config)?;
            let report = run::run_experiment(&cfg, &root)?;
            println!("{}", report.report);
            log::info!("outputs in {}", report.run_dir.display());
        }
        Command::Eval {
            ckpt,
            split,
            config,
            fold,
        } => {
            let config_path = match config {
                Some(c) => c,
                None => run::config_for_checkpoint(&ckpt)?,
            };
            let cfg = load_config(&root, &config_path)?;
            let ds = Dataset::load(&root.join(&cfg.data_dir))?;
            ds.check(&cfg)?;
            let fold = fold.or_else(|| run::fold_of_checkpoint(&ckpt));
            let instances = data::split_instances(&ds, &split, fold)?;
            let (lines, table) = run::evaluate_checkpoint(&ckpt, &instances, fold)?;
            let dir = ckpt.parent().unwrap_or(Path::new("."));
            write_jsonl(&dir.join(format!("eval-{split}.jsonl")), &lines)?;
            write_json(&dir.join(format!("eval-{split}.metrics.json")), &table)?;
            println!("{}\n{}", MetricsTable::header(), table.row(&split));
        }
        Command::Ablate { config, flags } => {
            let cfg = load_config(&root, &config)?;
            let report = run::run_ablation(&cfg, &root, &flags)?;
            println!("{}", report.table());
        }
    }
    Ok(())
}

/// Entry point: errors go to stderr as one JSON object and exit with status 1.
pub fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{report}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("dataset")
        .to_string()
}
