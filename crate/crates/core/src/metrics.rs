//! MRR and Hit@n over gold ranks.
//!
//! Ranks are 1-based. A record whose gold never showed up in the ranked list
//! counts as ranked at the fallback position (the candidate-set size by default).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cut-offs reported alongside MRR.
pub const HIT_CUTOFFS: [usize; 5] = [1, 3, 10, 20, 50];

/// Column width of [`MetricsTable::delta_row`].
pub const DELTA_WIDTH: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no records to score")]
    Empty,
    #[error("Hit@n needs n >= 1")]
    ZeroCutoff,
    #[error("instance `{0}` appears more than once in the prediction dump")]
    DuplicateInstance(String),
    #[error("instance `{0}` is not part of the dataset")]
    UnknownInstance(String),
    #[error("record `{0}` has no fold assignment")]
    MissingFold(String),
    #[error("record `{id}` ranks gold at {rank} among {count} candidates")]
    RankOutOfRange { id: String, rank: usize, count: usize },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub instance_id: String,
    pub gold_rank: Option<usize>,
    pub candidate_count: usize,
}

impl RankRecord {
    pub fn effective_rank(&self, fallback_rank: Option<usize>) -> usize {
        self.gold_rank
            .unwrap_or_else(|| fallback_rank.unwrap_or(self.candidate_count))
    }
}

pub fn mrr(records: &[RankRecord], fallback_rank: Option<usize>) -> Result<f64> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = records
        .iter()
        .map(|r| 1.0 / r.effective_rank(fallback_rank).max(1) as f64)
        .sum();
    Ok(total / records.len() as f64)
}

pub fn hit_at_n(records: &[RankRecord], n: usize, fallback_rank: Option<usize>) -> Result<f64> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    if n == 0 {
        return Err(MetricsError::ZeroCutoff);
    }
    let hits = records
        .iter()
        .filter(|r| r.effective_rank(fallback_rank) <= n)
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Metrics on the 0-100 scale used in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub count: usize,
    pub mrr: f64,
    /// `(n, Hit@n)` for every cut-off in [`HIT_CUTOFFS`].
    pub hits: Vec<(usize, f64)>,
}

impl MetricsTable {
    pub fn compute(records: &[RankRecord], fallback_rank: Option<usize>) -> Result<Self> {
        let hits = HIT_CUTOFFS
            .iter()
            .map(|&n| Ok((n, 100.0 * hit_at_n(records, n, fallback_rank)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricsTable {
            count: records.len(),
            mrr: 100.0 * mrr(records, fallback_rank)?,
            hits,
        })
    }

    pub fn hit(&self, n: usize) -> Option<f64> {
        self.hits.iter().find(|(k, _)| *k == n).map(|(_, v)| *v)
    }

    /// Column-wise mean of several tables (cross-validation folds).
    pub fn mean(tables: &[MetricsTable]) -> Result<Self> {
        if tables.is_empty() {
            return Err(MetricsError::Empty);
        }
        let n = tables.len() as f64;
        Ok(MetricsTable {
            count: tables.iter().map(|t| t.count).sum(),
            mrr: tables.iter().map(|t| t.mrr).sum::<f64>() / n,
            hits: HIT_CUTOFFS
                .iter()
                .map(|&c| {
                    let v = tables.iter().filter_map(|t| t.hit(c)).sum::<f64>() / n;
                    (c, v)
                })
                .collect(),
        })
    }

    pub fn header() -> String {
        Self::header_width(8)
    }

    /// Header with `width`-character metric columns.
    pub fn header_width(width: usize) -> String {
        let mut s = format!("{:<14}{:>width$}", "Model", "MRR");
        for n in HIT_CUTOFFS {
            s.push_str(&format!("{:>width$}", format!("Hit@{n}")));
        }
        s
    }

    pub fn row(&self, label: &str) -> String {
        self.row_width(label, 8)
    }

    pub fn row_width(&self, label: &str, width: usize) -> String {
        let mut s = format!("{label:<14}{:>width$.1}", self.mrr);
        for (_, v) in &self.hits {
            s.push_str(&format!("{v:>width$.1}"));
        }
        s
    }

    /// Row showing this table next to a reference run, e.g. `16.0(↓11.9)`;
    /// columns are [`DELTA_WIDTH`] wide.
    pub fn delta_row(&self, label: &str, reference: &MetricsTable) -> String {
        let cell = |v: f64, r: f64| {
            let d = v - r;
            let arrow = if d < 0.0 { '↓' } else { '↑' };
            format!("{v:.1}({arrow}{:.1})", d.abs())
        };
        let mut s = format!("{label:<14}{:>DELTA_WIDTH$}", cell(self.mrr, reference.mrr));
        for (n, v) in &self.hits {
            let r = reference.hit(*n).unwrap_or(0.0);
            s.push_str(&format!("{:>DELTA_WIDTH$}", cell(*v, r)));
        }
        s
    }
}

impl fmt::Display for MetricsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", MetricsTable::header())?;
        write!(f, "{}", self.row("run"))
    }
}

/// A dump line: one ranked instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub instance_id: String,
    pub gold_rank: Option<usize>,
    pub candidate_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
    /// Highest-scoring candidates, best first.
    #[serde(default)]
    pub top: Vec<ScoredMention>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredMention {
    pub mention: String,
    pub score: f64,
}

impl PredictionLine {
    pub fn record(&self) -> RankRecord {
        RankRecord {
            instance_id: self.instance_id.clone(),
            gold_rank: self.gold_rank,
            candidate_count: self.candidate_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub overall: MetricsTable,
    /// Per-fold tables, present for cross-validated runs.
    pub folds: Vec<MetricsTable>,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", MetricsTable::header())?;
        for (i, fold) in self.folds.iter().enumerate() {
            writeln!(f, "{}", fold.row(&format!("fold {i}")))?;
        }
        let label = if self.folds.is_empty() { "run" } else { "mean" };
        write!(f, "{}", self.overall.row(label))
    }
}

/// Score a prediction dump against the set of dataset instance ids.
///
/// With `folds > 1`, every line must carry its fold and the overall table is
/// the mean of the per-fold tables.
pub fn evaluate_run(
    dump: &[PredictionLine],
    dataset_ids: &BTreeSet<String>,
    folds: usize,
) -> Result<RunReport> {
    let mut seen = BTreeSet::new();
    for line in dump {
        if !dataset_ids.contains(&line.instance_id) {
            return Err(MetricsError::UnknownInstance(line.instance_id.clone()));
        }
        if !seen.insert(line.instance_id.as_str()) {
            return Err(MetricsError::DuplicateInstance(line.instance_id.clone()));
        }
        if let Some(rank) = line.gold_rank {
            if rank == 0 || rank > line.candidate_count {
                return Err(MetricsError::RankOutOfRange {
                    id: line.instance_id.clone(),
                    rank,
                    count: line.candidate_count,
                });
            }
        }
    }
    if folds <= 1 {
        let records: Vec<RankRecord> = dump.iter().map(PredictionLine::record).collect();
        return Ok(RunReport {
            overall: MetricsTable::compute(&records, None)?,
            folds: Vec::new(),
        });
    }
    let mut by_fold: BTreeMap<usize, Vec<RankRecord>> = BTreeMap::new();
    for line in dump {
        let fold = line
            .fold
            .ok_or_else(|| MetricsError::MissingFold(line.instance_id.clone()))?;
        by_fold.entry(fold).or_default().push(line.record());
    }
    let tables = by_fold
        .values()
        .map(|r| MetricsTable::compute(r, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        overall: MetricsTable::mean(&tables)?,
        folds: tables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(ranks: &[Option<usize>], count: usize) -> Vec<RankRecord> {
        ranks
            .iter()
            .enumerate()
            .map(|(i, r)| RankRecord {
                instance_id: format!("i{i}"),
                gold_rank: *r,
                candidate_count: count,
            })
            .collect()
    }

    #[test]
    fn mrr_examples() {
        assert_eq!(mrr(&recs(&[Some(1)], 10), None).unwrap(), 1.0);
        let v = mrr(&recs(&[Some(1), Some(2), Some(4)], 10), None).unwrap();
        assert!((v - 1.75 / 3.0).abs() < 1e-15);
        let v = mrr(&recs(&[None], 512), None).unwrap();
        assert_eq!(v, 1.0 / 512.0);
        assert_eq!(mrr(&[], None), Err(MetricsError::Empty));
    }

    #[test]
    fn hit_examples() {
        let r = recs(&[Some(1), Some(5), Some(12)], 20);
        assert!((hit_at_n(&r, 3, None).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(hit_at_n(&r, 20, None).unwrap(), 1.0);
        let absent = recs(&[None, None], 512);
        assert_eq!(hit_at_n(&absent, 50, Some(512)).unwrap(), 0.0);
        assert_eq!(hit_at_n(&r, 0, None), Err(MetricsError::ZeroCutoff));
    }

    fn line(id: &str, rank: Option<usize>, fold: Option<usize>) -> PredictionLine {
        PredictionLine {
            instance_id: id.into(),
            gold_rank: rank,
            candidate_count: 256,
            fold,
            top: Vec::new(),
        }
    }

    #[test]
    fn perfect_dump_scores_100() {
        let ids: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let dump = vec![line("a", Some(1), None), line("b", Some(1), None)];
        let report = evaluate_run(&dump, &ids, 1).unwrap();
        assert_eq!(report.overall.mrr, 100.0);
        assert!(report.overall.hits.iter().all(|(_, v)| *v == 100.0));
    }

    #[test]
    fn hand_built_dump() {
        let ids: BTreeSet<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let dump = vec![
            line("a", Some(1), None),
            line("b", Some(2), None),
            line("c", Some(25), None),
            line("d", None, None),
        ];
        let t = evaluate_run(&dump, &ids, 1).unwrap().overall;
        let expected_mrr = 100.0 * (1.0 + 0.5 + 1.0 / 25.0 + 1.0 / 256.0) / 4.0;
        assert!((t.mrr - expected_mrr).abs() < 1e-12);
        assert_eq!(t.hit(1), Some(25.0));
        assert_eq!(t.hit(3), Some(50.0));
        assert_eq!(t.hit(10), Some(50.0));
        assert_eq!(t.hit(20), Some(50.0));
        assert_eq!(t.hit(50), Some(75.0));
        assert!(MetricsTable::header().contains("MRR   Hit@1   Hit@3  Hit@10  Hit@20  Hit@50"));
    }

    #[test]
    fn dump_errors() {
        let ids: BTreeSet<String> = ["a"].iter().map(|s| s.to_string()).collect();
        let dup = vec![line("a", Some(1), None), line("a", Some(1), None)];
        assert_eq!(
            evaluate_run(&dup, &ids, 1),
            Err(MetricsError::DuplicateInstance("a".into()))
        );
        let unknown = vec![line("z", Some(1), None)];
        assert_eq!(
            evaluate_run(&unknown, &ids, 1),
            Err(MetricsError::UnknownInstance("z".into()))
        );
        let no_fold = vec![line("a", Some(1), None)];
        assert_eq!(
            evaluate_run(&no_fold, &ids, 5),
            Err(MetricsError::MissingFold("a".into()))
        );
    }

    #[test]
    fn folds_are_averaged() {
        let ids: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let dump = vec![
            line("a", Some(1), Some(0)),
            line("b", Some(2), Some(1)),
            line("c", Some(4), Some(1)),
        ];
        let report = evaluate_run(&dump, &ids, 2).unwrap();
        assert_eq!(report.folds.len(), 2);
        assert!((report.overall.mrr - (100.0 + 37.5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn delta_row_marks_direction() {
        let a = MetricsTable {
            count: 1,
            mrr: 16.0,
            hits: HIT_CUTOFFS.iter().map(|n| (*n, 10.0)).collect(),
        };
        let b = MetricsTable {
            count: 1,
            mrr: 27.9,
            hits: HIT_CUTOFFS.iter().map(|n| (*n, 5.0)).collect(),
        };
        let row = a.delta_row("sep", &b);
        assert!(row.contains("16.0(↓11.9)"));
        assert!(row.contains("10.0(↑5.0)"));
    }
}
