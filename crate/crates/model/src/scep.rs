//! Candidate ranking from masked-token probabilities and the training
//! objective `L = L_p + β·L_c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tape::{log_sum_exp, Tape, Var};
use crate::tensor::{cst, dot, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScepError {
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("contrast weight must be non-negative, got {0}")]
    Beta(f64),
    #[error("non-finite candidate score")]
    NonFinite,
    #[error("gold index {gold} outside {count} candidates")]
    GoldIndex { gold: usize, count: usize },
    #[error("no instances in batch")]
    EmptyBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// τ
    pub temperature: f64,
    /// β
    pub beta: f64,
    /// L2-normalize `z_m` and `z_c` before the dot product.
    #[serde(default)]
    pub normalize: bool,
    /// Sample this many negatives per step instead of using all of them.
    #[serde(default)]
    pub negatives: Option<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            temperature: 1.0,
            beta: 0.5,
            normalize: false,
            negatives: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ScepError> {
        if !(self.temperature > 0.0) {
            return Err(ScepError::Temperature(self.temperature));
        }
        if !(self.beta >= 0.0) {
            return Err(ScepError::Beta(self.beta));
        }
        Ok(())
    }
}

/// `−log softmax(z_m·z_c / τ)[positive]` over the positive and the negatives.
pub fn contrastive_loss<S: Scalar>(
    z_m: &[S],
    positive: &[S],
    negatives: &[Vec<S>],
    tau: f64,
) -> Result<S, ScepError> {
    if !(tau > 0.0) {
        return Err(ScepError::Temperature(tau));
    }
    let t: S = cst(tau);
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(dot(z_m, positive) / t);
    logits.extend(negatives.iter().map(|n| dot(z_m, n) / t));
    Ok(log_sum_exp(&logits) - logits[0])
}

/// Tape version; `z_c` holds one candidate per row and `positive` indexes it.
pub fn contrastive_loss_tape<S: Scalar>(
    tape: &mut Tape<S>,
    z_m: Var,
    z_c: Var,
    positive: usize,
    config: &LossConfig,
) -> Var {
    let (zm, zc) = if config.normalize {
        (tape.l2_normalize_rows(z_m), tape.l2_normalize_rows(z_c))
    } else {
        (z_m, z_c)
    };
    let sims = tape.matmul_nt(zm, zc);
    let logits = tape.scale(sims, cst(1.0 / config.temperature));
    tape.cross_entropy(logits, positive)
}

/// Candidates ordered by descending score; ties keep list order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
    /// 1-based rank of the gold candidate.
    pub gold_rank: usize,
}

pub fn rank_candidates<S: Scalar>(scores: &[S], gold: usize) -> Result<RankedPrediction, ScepError> {
    if gold >= scores.len() {
        return Err(ScepError::GoldIndex {
            gold,
            count: scores.len(),
        });
    }
    let scores: Vec<f64> = scores
        .iter()
        .map(|s| s.to_f64().filter(|v| v.is_finite()).ok_or(ScepError::NonFinite))
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let gold_rank = order.iter().position(|&i| i == gold).unwrap() + 1;
    Ok(RankedPrediction {
        order,
        scores,
        gold_rank,
    })
}

/// Mean cross-entropy of softmax-normalized candidate scores.
pub fn prediction_loss<S: Scalar>(scores: &[Vec<S>], gold: &[usize]) -> Result<S, ScepError> {
    if scores.is_empty() {
        return Err(ScepError::EmptyBatch);
    }
    let mut total = S::zero();
    for (row, &g) in scores.iter().zip(gold) {
        if g >= row.len() {
            return Err(ScepError::GoldIndex {
                gold: g,
                count: row.len(),
            });
        }
        if row.iter().any(|s| !s.is_finite()) {
            return Err(ScepError::NonFinite);
        }
        total += log_sum_exp(row) - row[g];
    }
    Ok(total / cst(scores.len() as f64))
}

pub fn total_loss<S: Scalar>(l_p: S, l_c: S, beta: f64) -> S {
    l_p + cst::<S>(beta) * l_c
}

/// The β grid swept in the loss-ratio experiment.
pub fn beta_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair_is_ln2() {
        let z = [0.3, -0.2];
        let l = contrastive_loss(&z, &[1.0, 1.0], &[vec![1.0, 1.0]], 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(contrastive_loss(&z, &[1.0, 1.0], &[], 1.0).unwrap(), 0.0);
        assert!(contrastive_loss(&z, &z, &[], 0.0).is_err());
    }

    #[test]
    fn hand_ranked() {
        let r = rank_candidates(&[2.0, 0.5, 1.0], 1).unwrap();
        assert_eq!(r.order, vec![0, 2, 1]);
        assert_eq!(r.gold_rank, 3);
        let tie = rank_candidates(&[0.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(tie.order, vec![0, 1, 2]);
        assert!(rank_candidates(&[f64::NAN], 0).is_err());
    }

    #[test]
    fn prediction_loss_examples() {
        let lnp = |p: f64| p.ln();
        let one: f64 = prediction_loss(&[vec![0.0, -1e9]], &[0]).unwrap();
        assert!(one.abs() < 1e-12);
        let uniform = prediction_loss(&[vec![0.0; 4]], &[2]).unwrap();
        assert!((uniform - 4f64.ln()).abs() < 1e-12);
        let batch = prediction_loss(
            &[vec![lnp(0.5), lnp(0.5)], vec![lnp(0.25), lnp(0.75)]],
            &[0, 0],
        )
        .unwrap();
        assert!((batch - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_loss(1.0, 2.0, 0.5), 2.0);
        assert_eq!(total_loss(1.5, 7.0, 0.0), 1.5);
        assert_eq!(beta_grid().len(), 10);
    }
}
