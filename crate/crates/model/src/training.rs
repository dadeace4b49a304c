//! Training loop, prediction and dev-set model selection.

use std::collections::HashMap;

use cgep_core::ecg::CandidateEvent;
use cgep_core::metrics::{MetricsTable, PredictionLine, RankRecord, ScoredMention};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{LossOutput, ModelError, PreparedInstance, SedgplModel};
use crate::params::{AdamW, AdamWConfig, ParamId, ParamStore};
use crate::scep::{rank_candidates, LossConfig, ScepError};
use crate::tape::Tape;
use crate::tensor::{Matrix, Scalar};

/// Mentions kept per line in prediction dumps.
pub const DUMP_TOP: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: AdamWConfig,
    pub loss: LossConfig,
    /// Instances per optimizer step (gradients are averaged).
    pub grad_accum: usize,
    pub seed: u64,
    /// Stop once an epoch's mean training loss falls below this value.
    #[serde(default)]
    pub stop_below: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            optimizer: AdamWConfig::default(),
            loss: LossConfig::default(),
            grad_accum: 1,
            seed: 0,
            stop_below: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean total loss `L`.
    pub loss: f64,
    /// Mean `L_p`.
    pub prediction: f64,
    /// Mean `L_c` (0 when contrast is off).
    pub contrastive: f64,
    pub dev_mrr: Option<f64>,
}

pub struct TrainOutcome<S> {
    pub log: Vec<EpochLog>,
    /// Epoch (1-based) whose parameters are returned.
    pub best_epoch: usize,
    pub best_dev_mrr: Option<f64>,
    pub best: ParamStore<S>,
}

/// Map over `items` on all available cores, preserving order.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<U>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// `z_c` for every distinct candidate of `instances`, under the current weights.
pub fn candidate_table<S: Scalar>(
    model: &SedgplModel,
    store: &ParamStore<S>,
    instances: &[PreparedInstance],
) -> Result<HashMap<CandidateEvent, Vec<S>>, ModelError> {
    let mut unique: Vec<&CandidateEvent> = instances.iter().flat_map(|p| &p.candidates).collect();
    unique.sort();
    unique.dedup();
    let reprs = par_map(&unique, |c| {
        model
            .prepare_candidate(c)
            .and_then(|p| model.candidate_repr(store, &p))
    });
    unique
        .into_iter()
        .zip(reprs)
        .map(|(c, r)| r.map(|v| (c.clone(), v)))
        .collect()
}

/// Rows of `z_c` for one instance and the positive's row, optionally with a
/// seeded subset of negatives.
fn contrast_rows<S: Scalar>(
    prep: &PreparedInstance,
    table: &HashMap<CandidateEvent, Vec<S>>,
    negatives: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> (Matrix<S>, usize) {
    let others: Vec<usize> = (0..prep.candidates.len()).filter(|&i| i != prep.gold).collect();
    let chosen: Vec<usize> = match negatives {
        Some(n) if n < others.len() => {
            let mut picked: Vec<usize> = index::sample(rng, others.len(), n)
                .into_iter()
                .map(|i| others[i])
                .collect();
            picked.sort_unstable();
            picked
        }
        _ => others,
    };
    let mut rows = vec![prep.gold];
    rows.extend(chosen);
    let d = table[&prep.candidates[prep.gold]].len();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &r in &rows {
        data.extend_from_slice(&table[&prep.candidates[r]]);
    }
    (Matrix::from_vec(rows.len(), d, data), 0)
}

pub struct StepLoss {
    pub total: f64,
    pub prediction: f64,
    pub contrastive: f64,
}

/// Forward and backward for one instance; returns the losses and gradients.
pub fn instance_gradients<S: Scalar>(
    model: &SedgplModel,
    store: &ParamStore<S>,
    prep: &PreparedInstance,
    z_c: Option<(Matrix<S>, usize)>,
    loss: &LossConfig,
) -> Result<(StepLoss, Vec<(ParamId, Matrix<S>)>), ModelError> {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, store, prep)?;
    let LossOutput {
        total,
        prediction,
        contrastive,
    } = model.loss(&mut tape, &out, prep.gold, z_c, loss);
    tape.backward(total);
    let f = |v| tape.value(v).scalar().to_f64().unwrap_or(f64::NAN);
    let step = StepLoss {
        total: f(total),
        prediction: f(prediction),
        contrastive: contrastive.map_or(0.0, f),
    };
    Ok((step, tape.param_grads()))
}

pub fn train<S: Scalar>(
    model: &SedgplModel,
    store: &mut ParamStore<S>,
    train: &[PreparedInstance],
    dev: &[PreparedInstance],
    config: &TrainConfig,
) -> Result<TrainOutcome<S>, TrainError> {
    config.loss.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut opt = AdamW::new(config.optimizer.clone());
    let contrast = !model.config.ablation.no_ctrst;
    let accum = config.grad_accum.max(1);
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ParamStore<S>)> = None;
    for epoch in 1..=config.epochs {
        let table = if contrast {
            Some(candidate_table(model, store, train)?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut sum_t, mut sum_p, mut sum_c) = (0.0, 0.0, 0.0);
        let mut pending: Vec<(ParamId, Matrix<S>)> = Vec::new();
        let mut in_batch = 0;
        for (k, &i) in order.iter().enumerate() {
            let prep = &train[i];
            let z_c = table
                .as_ref()
                .map(|t| contrast_rows(prep, t, config.loss.negatives, &mut rng));
            let (step, grads) = instance_gradients(model, store, prep, z_c, &config.loss)?;
            sum_t += step.total;
            sum_p += step.prediction;
            sum_c += step.contrastive;
            merge(&mut pending, grads);
            in_batch += 1;
            if in_batch == accum || k + 1 == order.len() {
                if in_batch > 1 {
                    let inv = crate::tensor::cst::<S>(1.0 / in_batch as f64);
                    for (_, g) in pending.iter_mut() {
                        g.data.iter_mut().for_each(|x| *x *= inv);
                    }
                }
                opt.step(store, &pending);
                pending.clear();
                in_batch = 0;
            }
        }
        let n = train.len() as f64;
        let dev_mrr = if dev.is_empty() {
            None
        } else {
            let lines = predict(model, store, dev, None)?;
            let records: Vec<RankRecord> = lines.iter().map(PredictionLine::record).collect();
            Some(MetricsTable::compute(&records, None).expect("non-empty").mrr)
        };
        let entry = EpochLog {
            epoch,
            loss: sum_t / n,
            prediction: sum_p / n,
            contrastive: sum_c / n,
            dev_mrr,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (L_p {:.4}, L_c {:.4}){}",
            entry.loss,
            entry.prediction,
            entry.contrastive,
            dev_mrr.map_or(String::new(), |m| format!(", dev MRR {m:.2}"))
        );
        if !entry.loss.is_finite() {
            return Err(TrainError::Diverged(epoch));
        }
        // dev MRR picks the best epoch; without dev data the last epoch wins
        let score = dev_mrr.unwrap_or(epoch as f64);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, store.clone()));
        }
        let stop = config.stop_below.is_some_and(|t| entry.loss < t);
        log.push(entry);
        if stop {
            if dev.is_empty() {
                best = Some((epoch as f64, epoch, store.clone()));
            }
            break;
        }
    }
    let (score, best_epoch, best) = best.ok_or(TrainError::NoEpochs)?;
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_dev_mrr: if dev.is_empty() { None } else { Some(score) },
        best,
    })
}

fn merge<S: Scalar>(into: &mut Vec<(ParamId, Matrix<S>)>, grads: Vec<(ParamId, Matrix<S>)>) {
    if into.is_empty() {
        *into = grads;
        return;
    }
    for (id, g) in grads {
        match into.iter_mut().find(|(i, _)| *i == id) {
            Some((_, acc)) => acc.add_assign(&g),
            None => into.push((id, g)),
        }
    }
}

/// Rank every instance's candidates; one dump line per instance.
pub fn predict<S: Scalar>(
    model: &SedgplModel,
    store: &ParamStore<S>,
    instances: &[PreparedInstance],
    fold: Option<usize>,
) -> Result<Vec<PredictionLine>, TrainError> {
    par_map(instances, |prep| -> Result<PredictionLine, TrainError> {
        let scores = model.score(store, prep)?;
        let ranked = rank_candidates(&scores, prep.gold)?;
        Ok(PredictionLine {
            instance_id: prep.instance_id.clone(),
            gold_rank: Some(ranked.gold_rank),
            candidate_count: prep.candidates.len(),
            fold,
            top: ranked
                .order
                .iter()
                .take(DUMP_TOP)
                .map(|&i| ScoredMention {
                    mention: prep.candidates[i].mention.clone(),
                    score: ranked.scores[i],
                })
                .collect(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] ScepError),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no epochs were run")]
    NoEpochs,
    #[error("loss became non-finite in epoch {0}")]
    Diverged(usize),
}
