//! Script-event-prediction variant: each graph instance collapses to the
//! longest causal chain that ends at its anchor (and so at the gold event).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ecg::{CandidateEvent, CausalEdge, CgepInstance, EventCausalityGraph, EventId};

/// Chains given to the model (gold excluded) must have at least this many events.
pub const MIN_CHAIN_NODES: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SepInstance {
    pub instance_id: String,
    pub doc_id: String,
    /// Cause-to-effect order, ending at the anchor.
    pub chain: Vec<EventId>,
    pub anchor_id: EventId,
    pub gold_id: EventId,
    pub gold: CandidateEvent,
    pub candidates: Vec<CandidateEvent>,
    pub sampling_seed: u64,
    /// The chain as a graph: its events and the edges between consecutive ones.
    pub graph: EventCausalityGraph,
}

impl SepInstance {
    /// Chain including the gold event.
    pub fn full_chain(&self) -> Vec<EventId> {
        let mut c = self.chain.clone();
        c.push(self.gold_id.clone());
        c
    }

    pub fn to_cgep(&self) -> CgepInstance {
        CgepInstance {
            instance_id: self.instance_id.clone(),
            doc_id: self.doc_id.clone(),
            graph: self.graph.clone(),
            anchor_id: self.anchor_id.clone(),
            gold_id: self.gold_id.clone(),
            gold: self.gold.clone(),
            candidates: self.candidates.clone(),
            sampling_seed: self.sampling_seed,
        }
    }
}

fn better(a: &[EventId], b: &[EventId]) -> bool {
    a.len() > b.len() || (a.len() == b.len() && a < b)
}

/// Longest directed chain ending at `target`; ties go to the lexicographically
/// smallest id sequence.
pub fn longest_chain_to(graph: &EventCausalityGraph, target: &str) -> Vec<EventId> {
    if !graph.contains(target) {
        return Vec::new();
    }
    let mut causes: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &graph.edges {
        causes.entry(&e.effect_id).or_default().push(&e.cause_id);
    }
    let mut best = vec![target.to_string()];
    let mut path = vec![target];
    let mut on_path: BTreeSet<&str> = BTreeSet::from([target]);
    // Backward DFS over simple paths; memoization would be unsound with cycles.
    fn walk<'g>(
        node: &'g str,
        causes: &BTreeMap<&'g str, Vec<&'g str>>,
        path: &mut Vec<&'g str>,
        on_path: &mut BTreeSet<&'g str>,
        best: &mut Vec<EventId>,
    ) {
        let mut extended = false;
        for &c in causes.get(node).map(Vec::as_slice).unwrap_or(&[]) {
            if on_path.insert(c) {
                extended = true;
                path.push(c);
                walk(c, causes, path, on_path, best);
                path.pop();
                on_path.remove(c);
            }
        }
        if !extended {
            let chain: Vec<EventId> = path.iter().rev().map(|s| s.to_string()).collect();
            if better(&chain, best) {
                *best = chain;
            }
        }
    }
    walk(target, &causes, &mut path, &mut on_path, &mut best);
    best
}

/// At most one chain per instance; `None` when the chain before the gold is too short.
pub fn extract_sep_chains(instance: &CgepInstance) -> Option<SepInstance> {
    let chain = longest_chain_to(&instance.graph, &instance.anchor_id);
    if chain.len() < MIN_CHAIN_NODES {
        return None;
    }
    let nodes = chain
        .iter()
        .map(|id| instance.graph.node(id).expect("chain node").clone())
        .collect();
    let edges = chain
        .windows(2)
        .map(|w| CausalEdge::new(w[0].clone(), w[1].clone()))
        .collect();
    let graph = EventCausalityGraph::new(
        instance.doc_id.clone(),
        instance.graph.graph_id.clone(),
        nodes,
        edges,
    )
    .expect("chain is a subgraph");
    Some(SepInstance {
        instance_id: instance.instance_id.clone(),
        doc_id: instance.doc_id.clone(),
        chain,
        anchor_id: instance.anchor_id.clone(),
        gold_id: instance.gold_id.clone(),
        gold: instance.gold.clone(),
        candidates: instance.candidates.clone(),
        sampling_seed: instance.sampling_seed,
        graph,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SepSplit {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded 75 / 12.5 / 12.5 split over documents.
pub fn sep_document_split(doc_ids: &[String], seed: u64) -> SepSplit {
    let mut docs: Vec<String> = doc_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = docs.len();
    let n_train = (n as f64 * 0.75).round() as usize;
    let n_dev = ((n as f64 * 0.125).round() as usize).min(n - n_train);
    let mut test = docs.split_off(n_train + n_dev);
    let mut dev = docs.split_off(n_train);
    let mut train = docs;
    train.sort();
    dev.sort();
    test.sort();
    SepSplit { train, dev, test }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecg::{Event, Span};

    fn ev(id: &str) -> Event {
        Event::new(id, id, format!("x {id}"), Span::new(2, 2 + id.len()), "T").unwrap()
    }

    fn graph(ids: &[&str], edges: &[(&str, &str)]) -> EventCausalityGraph {
        EventCausalityGraph::new(
            "d",
            "d#0",
            ids.iter().map(|i| ev(i)).collect(),
            edges.iter().map(|(a, b)| CausalEdge::new(*a, *b)).collect(),
        )
        .unwrap()
    }

    fn instance(g: EventCausalityGraph, anchor: &str, gold: &str) -> CgepInstance {
        let gold_ev = g.node(gold).unwrap().clone();
        CgepInstance {
            instance_id: format!("{anchor}->{gold}"),
            doc_id: "d".into(),
            graph: g.without_node(gold),
            anchor_id: anchor.into(),
            gold_id: gold.into(),
            gold: gold_ev.to_candidate(),
            candidates: vec![gold_ev.to_candidate()],
            sampling_seed: 0,
        }
    }

    #[test]
    fn longest_chain_into_gold() {
        let g = graph(&["a", "b", "c", "d"], &[("a", "b"), ("b", "c"), ("d", "c")]);
        let sep = extract_sep_chains(&instance(g.clone(), "b", "c")).unwrap();
        assert_eq!(sep.full_chain(), ["a", "b", "c"]);
        assert_eq!(sep.graph.edge_count(), 1);
        assert_eq!(sep.candidates.len(), 1);
        // d has no predecessors, so its chain is too short
        assert!(extract_sep_chains(&instance(g, "d", "c")).is_none());
    }

    #[test]
    fn ties_prefer_smallest_sequence() {
        let g = graph(&["p", "q", "r", "t"], &[("q", "r"), ("p", "r"), ("r", "t")]);
        assert_eq!(longest_chain_to(&g, "r"), ["p", "r"]);
        assert_eq!(longest_chain_to(&g, "t"), ["p", "r", "t"]);
    }

    #[test]
    fn cycles_terminate() {
        let g = graph(&["a", "b", "c"], &[("a", "b"), ("b", "a"), ("b", "c")]);
        assert_eq!(longest_chain_to(&g, "c"), ["a", "b", "c"]);
    }

    #[test]
    fn split_ratio() {
        let docs: Vec<String> = (0..80).map(|i| format!("d{i}")).collect();
        let s = sep_document_split(&docs, 9);
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (60, 10, 10));
        assert_eq!(s, sep_document_split(&docs, 9));
    }
}
