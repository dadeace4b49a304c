use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusDocument, DatasetError, DocumentMeta, Result};
use crate::ecg::{
    make_instances, mask_leakage_tracking, sample_candidates, weakly_connected_components,
    CandidatePool, CgepInstance, Event, EventCausalityGraph,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildOptions {
    pub candidates: usize,
    pub seed: u64,
    /// Graphs with fewer nodes are discarded.
    pub min_nodes: usize,
    pub pad_token: String,
}

impl BuildOptions {
    pub fn new(candidates: usize, seed: u64) -> Self {
        BuildOptions {
            candidates,
            seed,
            min_nodes: 5,
            pad_token: "[PAD]".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub docs: usize,
    pub graphs: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
    pub instances: usize,
    pub candidate_set: usize,
}

impl DatasetStats {
    /// Recover per-graph sizes from the emitted instances alone: each instance
    /// graph lost exactly its gold node, and the gold lost one edge per sibling
    /// instance sharing `(graph_id, gold_id)`.
    pub fn from_instances(instances: &[CgepInstance]) -> Self {
        let mut gold_in_degree: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for inst in instances {
            *gold_in_degree
                .entry((inst.graph.graph_id.as_str(), inst.gold_id.as_str()))
                .or_default() += 1;
        }
        let mut graphs: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for inst in instances {
            let key = (inst.graph.graph_id.as_str(), inst.gold_id.as_str());
            graphs.entry(&inst.graph.graph_id).or_insert((
                inst.graph.node_count() + 1,
                inst.graph.edge_count() + gold_in_degree[&key],
            ));
        }
        let docs: BTreeSet<&str> = instances.iter().map(|i| i.doc_id.as_str()).collect();
        let n = graphs.len().max(1) as f64;
        DatasetStats {
            docs: docs.len(),
            graphs: graphs.len(),
            avg_nodes: graphs.values().map(|g| g.0 as f64).sum::<f64>() / n,
            avg_edges: graphs.values().map(|g| g.1 as f64).sum::<f64>() / n,
            instances: instances.len(),
            candidate_set: instances.first().map_or(0, |i| i.candidates.len()),
        }
    }

    pub fn table(&self, name: &str) -> String {
        format!(
            "{:<12}|{:>7} |{:>7} |{:>10} |{:>10} |{:>10} |{:>9}\n{:<12}|{:>7} |{:>7} |{:>10.1} |{:>10.1} |{:>10} |{:>9}",
            "Datasets", "Docs", "ECGs", "Avg.Nodes", "Avg.Edges", "Instances", "CandiSet",
            name, self.docs, self.graphs, self.avg_nodes, self.avg_edges, self.instances,
            self.candidate_set
        )
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table("dataset"))
    }
}

#[derive(Clone, Debug)]
pub struct BuiltDataset {
    pub instances: Vec<CgepInstance>,
    pub graphs: Vec<EventCausalityGraph>,
    pub documents: Vec<DocumentMeta>,
    pub stats: DatasetStats,
}

/// Pad every other annotated mention in each event's sentence.
fn masked_events(doc: &CorpusDocument, pad: &str) -> Result<Vec<Event>> {
    let mut by_sentence: BTreeMap<usize, Vec<&Event>> = BTreeMap::new();
    for a in &doc.event_annotations {
        by_sentence.entry(a.sent_id).or_default().push(&a.event);
    }
    doc.event_annotations
        .iter()
        .map(|a| {
            let own = &a.event;
            let foreign: Vec<_> = by_sentence[&a.sent_id]
                .iter()
                .filter(|e| e.event_id != own.event_id)
                .map(|e| e.mention_span)
                .collect();
            let (sentence, span) =
                mask_leakage_tracking(&own.sentence, own.mention_span, &foreign, pad).map_err(
                    |source| DatasetError::Document {
                        doc: doc.doc_id.clone(),
                        source,
                    },
                )?;
            Ok(Event {
                sentence,
                mention_span: span,
                ..own.clone()
            })
        })
        .collect()
}

/// Graph construction, component split, size filter, instance expansion,
/// leakage masking and seeded candidate sampling.
pub fn build_dataset(documents: &[CorpusDocument], options: &BuildOptions) -> Result<BuiltDataset> {
    let mut docs: Vec<&CorpusDocument> = documents.iter().collect();
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let mut graphs = Vec::new();
    for doc in &docs {
        let events = masked_events(doc, &options.pad_token)?;
        let components = weakly_connected_components(&doc.doc_id, &events, &doc.causal_annotations)
            .map_err(|source| DatasetError::Document {
                doc: doc.doc_id.clone(),
                source,
            })?;
        graphs.extend(
            components
                .into_iter()
                .filter(|g| g.node_count() >= options.min_nodes),
        );
    }

    let pool = CandidatePool::from_graphs(&graphs);
    let mut seeds = ChaCha8Rng::seed_from_u64(options.seed);
    let mut instances = Vec::new();
    for graph in &graphs {
        for draft in make_instances(graph) {
            let id = format!(
                "{}/{}->{}",
                graph.graph_id, draft.anchor_id, draft.gold.event_id
            );
            let seed = seeds.next_u64();
            instances.push(sample_candidates(&draft, id, &pool, options.candidates, seed)?);
        }
    }
    let stats = DatasetStats::from_instances(&instances);
    Ok(BuiltDataset {
        instances,
        graphs,
        documents: docs.iter().map(|d| d.meta()).collect(),
        stats,
    })
}
