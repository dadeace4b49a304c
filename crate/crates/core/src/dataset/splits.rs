use std::collections::BTreeMap;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetTag {
    Esc,
    Maven,
}

impl DatasetTag {
    pub fn candidate_set(self) -> usize {
        match self {
            DatasetTag::Esc => crate::ecg::ESC_CANDIDATES,
            DatasetTag::Maven => crate::ecg::MAVEN_CANDIDATES,
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            DatasetTag::Esc => 15,
            DatasetTag::Maven => 10,
        }
    }
}

impl FromStr for DatasetTag {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "esc" => Ok(DatasetTag::Esc),
            "maven" => Ok(DatasetTag::Maven),
            other => Err(DatasetError::UnknownTag(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub doc_id: String,
    pub topic_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_topics: Vec<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub dataset: DatasetTag,
    pub seed: u64,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    /// Cross-validation folds (ESC only).
    pub folds: Vec<Fold>,
}

const ESC_FOLDS: usize = 5;
const ESC_DEV_TOPICS: usize = 2;
const MAVEN_DEV_FRACTION: f64 = 0.2;

/// Numeric topic ids sort numerically, everything else lexically after them.
fn topic_key(t: &str) -> (u8, u64, String) {
    match t.parse::<u64>() {
        Ok(n) => (0, n, String::new()),
        Err(_) => (1, 0, t.to_string()),
    }
}

pub fn make_splits(docs: &[DocumentMeta], tag: DatasetTag, seed: u64) -> Result<SplitAssignment> {
    match tag {
        DatasetTag::Esc => esc_splits(docs, seed),
        DatasetTag::Maven => maven_splits(docs, seed),
    }
}

fn esc_splits(docs: &[DocumentMeta], seed: u64) -> Result<SplitAssignment> {
    let mut by_topic: BTreeMap<(u8, u64, String), (String, Vec<String>)> = BTreeMap::new();
    for d in docs {
        if d.topic_id.trim().is_empty() {
            return Err(DatasetError::MissingTopic(d.doc_id.clone()));
        }
        by_topic
            .entry(topic_key(&d.topic_id))
            .or_insert_with(|| (d.topic_id.clone(), Vec::new()))
            .1
            .push(d.doc_id.clone());
    }
    if by_topic.len() < ESC_DEV_TOPICS + ESC_FOLDS {
        return Err(DatasetError::NotEnoughTopics(by_topic.len()));
    }
    let mut topics: Vec<(String, Vec<String>)> = by_topic.into_values().collect();
    for (_, ids) in topics.iter_mut() {
        ids.sort();
    }
    let dev_topics = topics.split_off(topics.len() - ESC_DEV_TOPICS);
    let dev: Vec<String> = dev_topics.into_iter().flat_map(|(_, d)| d).collect();

    let n = topics.len();
    let mut bounds = Vec::with_capacity(ESC_FOLDS + 1);
    for f in 0..=ESC_FOLDS {
        bounds.push(f * n / ESC_FOLDS);
    }
    let folds = (0..ESC_FOLDS)
        .map(|f| {
            let (lo, hi) = (bounds[f], bounds[f + 1]);
            let mut train = Vec::new();
            let mut test = Vec::new();
            let mut test_topics = Vec::new();
            for (i, (topic, ids)) in topics.iter().enumerate() {
                if (lo..hi).contains(&i) {
                    test_topics.push(topic.clone());
                    test.extend(ids.iter().cloned());
                } else {
                    train.extend(ids.iter().cloned());
                }
            }
            Fold {
                test_topics,
                train,
                test,
            }
        })
        .collect();
    Ok(SplitAssignment {
        dataset: DatasetTag::Esc,
        seed,
        train: topics.into_iter().flat_map(|(_, d)| d).collect(),
        dev,
        test: Vec::new(),
        folds,
    })
}

/// Original dev becomes test; a seeded 20% of training documents becomes dev.
fn maven_splits(docs: &[DocumentMeta], seed: u64) -> Result<SplitAssignment> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for d in docs {
        match d.topic_id.as_str() {
            "train" => train.push(d.doc_id.clone()),
            "valid" | "dev" => test.push(d.doc_id.clone()),
            "test" => {}
            other => {
                return Err(DatasetError::UnknownSplitTag {
                    doc: d.doc_id.clone(),
                    tag: other.to_string(),
                })
            }
        }
    }
    train.sort();
    test.sort();
    train.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = (train.len() as f64 * MAVEN_DEV_FRACTION).round() as usize;
    let mut dev: Vec<String> = train.drain(..n_dev).collect();
    dev.sort();
    train.sort();
    Ok(SplitAssignment {
        dataset: DatasetTag::Maven,
        seed,
        train,
        dev,
        test,
        folds: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn esc_docs(topics: usize) -> Vec<DocumentMeta> {
        (1..=topics)
            .flat_map(|t| {
                (0..3).map(move |d| DocumentMeta {
                    doc_id: format!("t{t}_d{d}"),
                    topic_id: t.to_string(),
                })
            })
            .collect()
    }

    #[test]
    fn esc_uses_last_two_topics_for_dev() {
        let s = make_splits(&esc_docs(22), DatasetTag::Esc, 0).unwrap();
        assert_eq!(s.folds.len(), 5);
        let dev: BTreeSet<_> = s.dev.iter().map(|d| d.split('_').next().unwrap()).collect();
        assert_eq!(dev, BTreeSet::from(["t21", "t22"]));
        let mut topics: Vec<String> = s.folds.iter().flat_map(|f| f.test_topics.clone()).collect();
        topics.sort_by_key(|t| t.parse::<u32>().unwrap());
        assert_eq!(topics, (1..=20).map(|t| t.to_string()).collect::<Vec<_>>());
        for f in &s.folds {
            assert_eq!(f.test_topics.len(), 4);
            let train: BTreeSet<_> = f.train.iter().collect();
            assert!(f.test.iter().all(|d| !train.contains(d)));
            assert_eq!(f.train.len() + f.test.len(), 60);
        }
    }

    #[test]
    fn esc_needs_topics() {
        let mut docs = esc_docs(22);
        docs[0].topic_id.clear();
        assert!(matches!(
            make_splits(&docs, DatasetTag::Esc, 0),
            Err(DatasetError::MissingTopic(_))
        ));
        assert!(matches!(
            make_splits(&esc_docs(5), DatasetTag::Esc, 0),
            Err(DatasetError::NotEnoughTopics(5))
        ));
    }

    #[test]
    fn maven_dev_is_seeded() {
        let mut docs: Vec<DocumentMeta> = (0..50)
            .map(|i| DocumentMeta {
                doc_id: format!("m{i:02}"),
                topic_id: "train".into(),
            })
            .collect();
        docs.push(DocumentMeta {
            doc_id: "v0".into(),
            topic_id: "valid".into(),
        });
        let a = make_splits(&docs, DatasetTag::Maven, 3).unwrap();
        let b = make_splits(&docs, DatasetTag::Maven, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dev.len(), 10);
        assert_eq!(a.train.len(), 40);
        assert_eq!(a.test, vec!["v0".to_string()]);
        let c = make_splits(&docs, DatasetTag::Maven, 4).unwrap();
        assert_ne!(a.dev, c.dev);
    }
}
