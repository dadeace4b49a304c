//! Event causality graphs and the graph algorithms instance construction relies on.
//!
//! Every structure here is an immutable value: graphs keep their nodes sorted by
//! `event_id` and their edges sorted by `(cause_id, effect_id)`, so anything
//! derived from them (components, instances, candidate draws) is reproducible.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type EventId = String;

/// Candidate-set size used for MAVEN-ERE derived datasets.
pub const MAVEN_CANDIDATES: usize = 512;
/// Candidate-set size used for EventStoryLine derived datasets.
pub const ESC_CANDIDATES: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EcgError {
    #[error("unknown event id `{id}` referenced by {context}")]
    UnknownEvent { id: String, context: String },
    #[error("duplicate event id `{0}`")]
    DuplicateEvent(String),
    #[error("event `{0}` has an empty mention")]
    EmptyMention(String),
    #[error("event `{id}`: span [{start}, {end}) lies outside a sentence of {len} characters")]
    SpanOutOfBounds {
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("event `{id}`: sentence span reads `{found}`, expected mention `{expected}`")]
    MentionMismatch {
        id: String,
        expected: String,
        found: String,
    },
    #[error("no undirected path between `{from}` and `{to}`")]
    Unreachable { from: String, to: String },
    #[error("overlapping mention spans [{0}, {1}) and [{2}, {3})")]
    OverlappingSpans(usize, usize, usize, usize),
    #[error("candidate pool too small: need {required} negatives, {available} available")]
    PoolTooSmall { required: usize, available: usize },
    #[error("candidate-set size must be at least 1")]
    EmptyCandidateSet,
}

pub type Result<T> = std::result::Result<T, EcgError>;

/// Half-open character interval `[start, end)` inside a sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Slice `text` by a character span. `None` when the span is out of bounds.
pub fn char_slice(text: &str, span: Span) -> Option<&str> {
    if span.start > span.end {
        return None;
    }
    let byte_at = |c: usize| -> Option<usize> {
        if c == 0 {
            return Some(0);
        }
        text.char_indices()
            .map(|(b, _)| b)
            .chain(std::iter::once(text.len()))
            .nth(c)
    };
    let start = byte_at(span.start)?;
    let end = byte_at(span.end)?;
    text.get(start..end)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub event_id: EventId,
    pub mention: String,
    pub sentence: String,
    pub mention_span: Span,
    pub event_type: String,
}

impl Event {
    pub fn new(
        event_id: impl Into<String>,
        mention: impl Into<String>,
        sentence: impl Into<String>,
        mention_span: Span,
        event_type: impl Into<String>,
    ) -> Result<Self> {
        let event = Event {
            event_id: event_id.into(),
            mention: mention.into(),
            sentence: sentence.into(),
            mention_span,
            event_type: event_type.into(),
        };
        event.validate()?;
        Ok(event)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mention.trim().is_empty() {
            return Err(EcgError::EmptyMention(self.event_id.clone()));
        }
        let len = self.sentence.chars().count();
        let found = char_slice(&self.sentence, self.mention_span).ok_or_else(|| {
            EcgError::SpanOutOfBounds {
                id: self.event_id.clone(),
                start: self.mention_span.start,
                end: self.mention_span.end,
                len,
            }
        })?;
        if found != self.mention {
            return Err(EcgError::MentionMismatch {
                id: self.event_id.clone(),
                expected: self.mention.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    pub fn to_candidate(&self) -> CandidateEvent {
        CandidateEvent {
            mention: self.mention.clone(),
            sentence: self.sentence.clone(),
            event_type: self.event_type.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CausalEdge {
    pub cause_id: EventId,
    pub effect_id: EventId,
}

impl CausalEdge {
    pub fn new(cause_id: impl Into<String>, effect_id: impl Into<String>) -> Self {
        CausalEdge {
            cause_id: cause_id.into(),
            effect_id: effect_id.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCausalityGraph {
    pub doc_id: String,
    /// Unique within a dataset: `<doc_id>#<component index>`.
    pub graph_id: String,
    pub nodes: Vec<Event>,
    pub edges: Vec<CausalEdge>,
}

impl EventCausalityGraph {
    /// Build a graph, normalizing node and edge order.
    ///
    /// Self-loops are dropped with a warning and duplicate edges collapse to one.
    pub fn new(
        doc_id: impl Into<String>,
        graph_id: impl Into<String>,
        nodes: Vec<Event>,
        edges: Vec<CausalEdge>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let mut nodes = nodes;
        nodes.sort_by(|a, b| a.event_id.cmp(&b.event_id));
        for pair in nodes.windows(2) {
            if pair[0].event_id == pair[1].event_id {
                return Err(EcgError::DuplicateEvent(pair[0].event_id.clone()));
            }
        }
        let ids: BTreeSet<&str> = nodes.iter().map(|n| n.event_id.as_str()).collect();
        let mut kept = BTreeSet::new();
        for edge in edges {
            for id in [&edge.cause_id, &edge.effect_id] {
                if !ids.contains(id.as_str()) {
                    return Err(EcgError::UnknownEvent {
                        id: id.clone(),
                        context: format!("edge {} -> {}", edge.cause_id, edge.effect_id),
                    });
                }
            }
            if edge.cause_id == edge.effect_id {
                log::warn!("{doc_id}: dropping self-loop on `{}`", edge.cause_id);
                continue;
            }
            kept.insert(edge);
        }
        Ok(EventCausalityGraph {
            doc_id,
            graph_id: graph_id.into(),
            nodes,
            edges: kept.into_iter().collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<&Event> {
        self.nodes
            .binary_search_by(|n| n.event_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    pub(crate) fn require(&self, id: &str) -> Result<&Event> {
        self.node(id).ok_or_else(|| EcgError::UnknownEvent {
            id: id.to_string(),
            context: format!("graph {}", self.graph_id),
        })
    }

    /// Direct causes of `id`, sorted.
    pub fn causes_of(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.effect_id == id)
            .map(|e| e.cause_id.as_str())
            .collect()
    }

    pub fn out_degree(&self, id: &str) -> usize {
        self.edges.iter().filter(|e| e.cause_id == id).count()
    }

    /// Copy of the graph with `id` and its incident edges removed.
    pub fn without_node(&self, id: &str) -> EventCausalityGraph {
        EventCausalityGraph {
            doc_id: self.doc_id.clone(),
            graph_id: self.graph_id.clone(),
            nodes: self
                .nodes
                .iter()
                .filter(|n| n.event_id != id)
                .cloned()
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| e.cause_id != id && e.effect_id != id)
                .cloned()
                .collect(),
        }
    }

    fn undirected_adjacency(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut adj: BTreeMap<&str, BTreeSet<&str>> = self
            .nodes
            .iter()
            .map(|n| (n.event_id.as_str(), BTreeSet::new()))
            .collect();
        for e in &self.edges {
            adj.entry(&e.cause_id).or_default().insert(&e.effect_id);
            adj.entry(&e.effect_id).or_default().insert(&e.cause_id);
        }
        adj
    }

    /// Undirected BFS distances from `source` to every reachable node.
    pub fn distances_from(&self, source: &str) -> Result<BTreeMap<String, usize>> {
        self.require(source)?;
        let adj = self.undirected_adjacency();
        let mut dist: BTreeMap<String, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(source.to_string(), 0);
        queue.push_back(source);
        while let Some(current) = queue.pop_front() {
            let d = dist[current];
            for &next in &adj[current] {
                if !dist.contains_key(next) {
                    dist.insert(next.to_string(), d + 1);
                    queue.push_back(next);
                }
            }
        }
        Ok(dist)
    }

    pub fn is_weakly_connected(&self) -> bool {
        match self.nodes.first() {
            None => true,
            Some(first) => self
                .distances_from(&first.event_id)
                .map(|d| d.len() == self.nodes.len())
                .unwrap_or(false),
        }
    }
}

/// Split a node/edge set into weakly connected components.
///
/// Components are numbered in order of their smallest event id.
pub fn weakly_connected_components(
    doc_id: &str,
    nodes: &[Event],
    edges: &[CausalEdge],
) -> Result<Vec<EventCausalityGraph>> {
    let whole = EventCausalityGraph::new(doc_id, doc_id, nodes.to_vec(), edges.to_vec())?;
    let adj = whole.undirected_adjacency();
    let mut component_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut count = 0;
    for node in &whole.nodes {
        let start = node.event_id.as_str();
        if component_of.contains_key(start) {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        component_of.insert(start, count);
        while let Some(current) = queue.pop_front() {
            for &next in &adj[current] {
                if !component_of.contains_key(next) {
                    component_of.insert(next, count);
                    queue.push_back(next);
                }
            }
        }
        count += 1;
    }
    let mut groups: Vec<(Vec<Event>, Vec<CausalEdge>)> = vec![(Vec::new(), Vec::new()); count];
    for node in &whole.nodes {
        groups[component_of[node.event_id.as_str()]].0.push(node.clone());
    }
    for edge in &whole.edges {
        groups[component_of[edge.cause_id.as_str()]].1.push(edge.clone());
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, (n, e))| EventCausalityGraph::new(doc_id, format!("{doc_id}#{i}"), n, e))
        .collect()
}

/// Nodes with out-degree zero.
pub fn tail_events(graph: &EventCausalityGraph) -> BTreeSet<EventId> {
    let causes: BTreeSet<&str> = graph.edges.iter().map(|e| e.cause_id.as_str()).collect();
    graph
        .nodes
        .iter()
        .filter(|n| !causes.contains(n.event_id.as_str()))
        .map(|n| n.event_id.clone())
        .collect()
}

/// Number of edges on the shortest path between two events, ignoring edge direction.
pub fn undirected_distance(graph: &EventCausalityGraph, from: &str, to: &str) -> Result<usize> {
    graph.require(to)?;
    graph
        .distances_from(from)?
        .get(to)
        .copied()
        .ok_or_else(|| EcgError::Unreachable {
            from: from.to_string(),
            to: to.to_string(),
        })
}

/// A prediction problem before candidates are attached.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceDraft {
    /// Source graph with the gold node removed.
    pub graph: EventCausalityGraph,
    pub anchor_id: EventId,
    pub gold: Event,
}

/// One draft per (tail event, direct cause) pair, sorted by `(gold id, anchor id)`.
pub fn make_instances(graph: &EventCausalityGraph) -> Vec<InstanceDraft> {
    let mut drafts = Vec::new();
    for gold_id in tail_events(graph) {
        let causes = graph.causes_of(&gold_id);
        if causes.is_empty() {
            continue;
        }
        let reduced = graph.without_node(&gold_id);
        let gold = graph.node(&gold_id).cloned().expect("tail event is a node");
        for anchor in causes {
            drafts.push(InstanceDraft {
                graph: reduced.clone(),
                anchor_id: anchor.to_string(),
                gold: gold.clone(),
            });
        }
    }
    drafts
}

/// Replace each foreign mention span with `pad_token`.
///
/// Replacement is positional: identical text outside the spans is left alone.
pub fn mask_leakage(sentence: &str, foreign: &[Span], pad_token: &str) -> Result<String> {
    Ok(mask_spans(sentence, None, foreign, pad_token)?.0)
}

/// Like [`mask_leakage`] but also reports where `own` ends up after padding.
pub fn mask_leakage_tracking(
    sentence: &str,
    own: Span,
    foreign: &[Span],
    pad_token: &str,
) -> Result<(String, Span)> {
    let (text, span) = mask_spans(sentence, Some(own), foreign, pad_token)?;
    Ok((text, span.expect("own span tracked")))
}

fn mask_spans(
    sentence: &str,
    own: Option<Span>,
    foreign: &[Span],
    pad_token: &str,
) -> Result<(String, Option<Span>)> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut sorted: Vec<Span> = foreign.to_vec();
    sorted.sort();
    let mut all = sorted.clone();
    all.extend(own);
    all.sort();
    for pair in all.windows(2) {
        if pair[0].overlaps(&pair[1]) || pair[0] == pair[1] {
            return Err(EcgError::OverlappingSpans(
                pair[0].start,
                pair[0].end,
                pair[1].start,
                pair[1].end,
            ));
        }
    }
    for span in &all {
        if span.end > chars.len() || span.start > span.end {
            return Err(EcgError::SpanOutOfBounds {
                id: "<masked span>".to_string(),
                start: span.start,
                end: span.end,
                len: chars.len(),
            });
        }
    }
    let pad_len = pad_token.chars().count();
    let mut out = String::with_capacity(sentence.len());
    let mut out_len = 0usize;
    let mut cursor = 0usize;
    let mut shifted_own = None;
    let mut pending_own = own;
    for span in &sorted {
        if let Some(o) = pending_own {
            if o.start < span.start {
                let shift = out_len as isize - cursor as isize;
                shifted_own = Some(Span::new(
                    (o.start as isize + shift) as usize,
                    (o.end as isize + shift) as usize,
                ));
                pending_own = None;
            }
        }
        out.extend(&chars[cursor..span.start]);
        out_len += span.start - cursor;
        out.push_str(pad_token);
        out_len += pad_len;
        cursor = span.end;
    }
    if let Some(o) = pending_own {
        let shift = out_len as isize - cursor as isize;
        shifted_own = Some(Span::new(
            (o.start as isize + shift) as usize,
            (o.end as isize + shift) as usize,
        ));
    }
    out.extend(&chars[cursor..]);
    Ok((out, shifted_own))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateEvent {
    pub mention: String,
    /// Sentence with every other annotated mention replaced by the pad token.
    pub sentence: String,
    pub event_type: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgepInstance {
    pub instance_id: String,
    pub doc_id: String,
    pub graph: EventCausalityGraph,
    pub anchor_id: EventId,
    pub gold_id: EventId,
    pub gold: CandidateEvent,
    pub candidates: Vec<CandidateEvent>,
    pub sampling_seed: u64,
}

impl CgepInstance {
    pub fn anchor(&self) -> &Event {
        self.graph
            .node(&self.anchor_id)
            .expect("validated instance has its anchor")
    }

    /// Position of the gold event inside `candidates`.
    pub fn gold_index(&self) -> Option<usize> {
        self.candidates.iter().position(|c| *c == self.gold)
    }

    pub fn validate(&self, expected_candidates: Option<usize>) -> std::result::Result<(), String> {
        if !self.graph.contains(&self.anchor_id) {
            return Err(format!(
                "{}: anchor `{}` missing from graph",
                self.instance_id, self.anchor_id
            ));
        }
        if self.graph.contains(&self.gold_id) {
            return Err(format!("{}: gold node still present", self.instance_id));
        }
        let gold_count = self.candidates.iter().filter(|c| **c == self.gold).count();
        if gold_count != 1 {
            return Err(format!(
                "{}: gold appears {gold_count} times among candidates",
                self.instance_id
            ));
        }
        if let Some(k) = expected_candidates {
            if self.candidates.len() != k {
                return Err(format!(
                    "{}: {} candidates, expected {k}",
                    self.instance_id,
                    self.candidates.len()
                ));
            }
        }
        for node in &self.graph.nodes {
            node.validate().map_err(|e| format!("{}: {e}", self.instance_id))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct PoolEntry {
    candidate: CandidateEvent,
    owners: BTreeSet<String>,
}

/// Deduplicated tail events of a dataset, keyed by `(mention, sentence)`.
#[derive(Clone, Debug, Default)]
pub struct CandidatePool {
    entries: Vec<PoolEntry>,
    key_index: BTreeMap<(String, String), usize>,
    exclusive: BTreeMap<String, Vec<usize>>,
}

impl CandidatePool {
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a EventCausalityGraph>) -> Self {
        let mut by_key: BTreeMap<(String, String), PoolEntry> = BTreeMap::new();
        for graph in graphs {
            for tail in tail_events(graph) {
                let event = graph.node(&tail).expect("tail is a node");
                by_key
                    .entry((event.mention.clone(), event.sentence.clone()))
                    .or_insert_with(|| PoolEntry {
                        candidate: event.to_candidate(),
                        owners: BTreeSet::new(),
                    })
                    .owners
                    .insert(graph.graph_id.clone());
            }
        }
        let mut pool = CandidatePool::default();
        for (i, (key, entry)) in by_key.into_iter().enumerate() {
            if entry.owners.len() == 1 {
                let owner = entry.owners.iter().next().unwrap().clone();
                pool.exclusive.entry(owner).or_default().push(i);
            }
            pool.key_index.insert(key, i);
            pool.entries.push(entry);
        }
        pool
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted entry indices a draft from `graph_id` with gold `gold` may not draw.
    fn excluded_for(&self, graph_id: &str, gold: &CandidateEvent) -> Vec<usize> {
        let mut excluded: Vec<usize> = self.exclusive.get(graph_id).cloned().unwrap_or_default();
        if let Some(&i) = self
            .key_index
            .get(&(gold.mention.clone(), gold.sentence.clone()))
        {
            excluded.push(i);
        }
        excluded.sort_unstable();
        excluded.dedup();
        excluded
    }

    pub fn available_for(&self, graph_id: &str, gold: &CandidateEvent) -> usize {
        self.entries.len() - self.excluded_for(graph_id, gold).len()
    }
}

/// Attach `k - 1` seeded negatives plus the gold at a seeded position.
pub fn sample_candidates(
    draft: &InstanceDraft,
    instance_id: impl Into<String>,
    pool: &CandidatePool,
    k: usize,
    seed: u64,
) -> Result<CgepInstance> {
    if k == 0 {
        return Err(EcgError::EmptyCandidateSet);
    }
    let gold = draft.gold.to_candidate();
    let excluded = pool.excluded_for(&draft.graph.graph_id, &gold);
    let available = pool.entries.len() - excluded.len();
    let required = k - 1;
    if available < required {
        return Err(EcgError::PoolTooSmall {
            required,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<CandidateEvent> = index::sample(&mut rng, available, required)
        .into_iter()
        .map(|i| {
            let mut idx = i;
            for &e in &excluded {
                if e <= idx {
                    idx += 1;
                } else {
                    break;
                }
            }
            pool.entries[idx].candidate.clone()
        })
        .collect();
    let gold_pos = rng.random_range(0..k);
    candidates.insert(gold_pos, gold.clone());
    Ok(CgepInstance {
        instance_id: instance_id.into(),
        doc_id: draft.graph.doc_id.clone(),
        graph: draft.graph.clone(),
        anchor_id: draft.anchor_id.clone(),
        gold_id: draft.gold.event_id.clone(),
        gold,
        candidates,
        sampling_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ev(id: &str) -> Event {
        let sentence = format!("then {id} happened");
        Event::new(id, id, sentence, Span::new(5, 5 + id.chars().count()), "Generic").unwrap()
    }

    fn graph(ids: &[&str], edges: &[(&str, &str)]) -> EventCausalityGraph {
        EventCausalityGraph::new(
            "doc",
            "doc#0",
            ids.iter().map(|i| ev(i)).collect(),
            edges.iter().map(|(a, b)| CausalEdge::new(*a, *b)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn components_split_disconnected_singleton() {
        let g = graph(&["a", "b", "c"], &[("a", "b")]);
        let comps = weakly_connected_components("doc", &g.nodes, &g.edges).unwrap();
        let ids: Vec<Vec<&str>> = comps
            .iter()
            .map(|c| c.nodes.iter().map(|n| n.event_id.as_str()).collect())
            .collect();
        assert_eq!(ids, vec![vec!["a", "b"], vec!["c"]]);
        assert_eq!(comps[0].edges.len(), 1);
        assert!(comps[1].edges.is_empty());
    }

    #[test]
    fn components_join_through_reversed_edge() {
        let g = graph(&["a", "b", "c"], &[("a", "b"), ("c", "b")]);
        let comps = weakly_connected_components("doc", &g.nodes, &g.edges).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].node_count(), 3);
    }

    #[test]
    fn empty_input_has_no_components() {
        assert!(weakly_connected_components("doc", &[], &[]).unwrap().is_empty());
    }

    #[test]
    fn tails() {
        let chain = graph(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        assert_eq!(tail_events(&chain), BTreeSet::from(["c".to_string()]));
        let fork = graph(&["a", "b", "c"], &[("a", "b"), ("a", "c")]);
        assert_eq!(
            tail_events(&fork),
            BTreeSet::from(["b".to_string(), "c".to_string()])
        );
    }

    #[test]
    fn distance_on_chain() {
        let chain = graph(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        assert_eq!(undirected_distance(&chain, "a", "c").unwrap(), 2);
        assert_eq!(undirected_distance(&chain, "c", "a").unwrap(), 2);
        assert_eq!(undirected_distance(&chain, "b", "b").unwrap(), 0);
        assert!(matches!(
            undirected_distance(&chain, "a", "zz"),
            Err(EcgError::UnknownEvent { .. })
        ));
    }

    #[test]
    fn self_loops_and_duplicates_are_dropped() {
        let g = graph(&["a", "b"], &[("a", "b"), ("a", "b"), ("a", "a")]);
        assert_eq!(g.edges, vec![CausalEdge::new("a", "b")]);
    }

    #[test]
    fn instances_for_chain() {
        let chain = graph(&["a", "b", "c"], &[("a", "b"), ("b", "c")]);
        let drafts = make_instances(&chain);
        assert_eq!(drafts.len(), 1);
        assert_eq!(drafts[0].anchor_id, "b");
        assert_eq!(drafts[0].gold.event_id, "c");
        assert!(!drafts[0].graph.contains("c"));
    }

    #[test]
    fn instances_split_multiple_causes() {
        let g = graph(&["a", "b", "c"], &[("a", "c"), ("b", "c")]);
        let drafts = make_instances(&g);
        let pairs: Vec<(&str, &str)> = drafts
            .iter()
            .map(|d| (d.anchor_id.as_str(), d.gold.event_id.as_str()))
            .collect();
        assert_eq!(pairs, vec![("a", "c"), ("b", "c")]);
    }

    #[test]
    fn instances_for_star() {
        let g = graph(&["a", "b", "c", "d"], &[("a", "b"), ("a", "c"), ("a", "d")]);
        let drafts = make_instances(&g);
        assert_eq!(drafts.len(), 3);
        for (d, gold) in drafts.iter().zip(["b", "c", "d"]) {
            assert_eq!(d.anchor_id, "a");
            assert_eq!(d.gold.event_id, gold);
            assert_eq!(d.graph.node_count(), 3);
            assert_eq!(d.graph.edge_count(), 2);
        }
    }

    #[test]
    fn no_instances_without_caused_tail() {
        let g = graph(&["a"], &[]);
        assert!(make_instances(&g).is_empty());
    }

    #[test]
    fn leakage_single_span() {
        let s = "The flood destroyed homes";
        assert_eq!(
            mask_leakage(s, &[Span::new(10, 19)], "[PAD]").unwrap(),
            "The flood [PAD] homes"
        );
        assert_eq!(mask_leakage(s, &[], "[PAD]").unwrap(), s);
    }

    #[test]
    fn leakage_is_positional() {
        // "fire" occurs twice; only the annotated occurrence is padded
        let s = "fire spread and the fire killed two";
        let (out, own) =
            mask_leakage_tracking(s, Span::new(25, 31), &[Span::new(20, 24)], "[PAD]").unwrap();
        assert_eq!(out, "fire spread and the [PAD] killed two");
        assert_eq!(char_slice(&out, own), Some("killed"));
    }

    #[test]
    fn leakage_rejects_overlap() {
        let err = mask_leakage("abcdef", &[Span::new(0, 3), Span::new(2, 4)], "[PAD]");
        assert!(matches!(err, Err(EcgError::OverlappingSpans(..))));
    }

    #[test]
    fn own_span_shifts_after_earlier_pads() {
        let s = "quake caused fires and looting";
        let (out, own) = mask_leakage_tracking(
            s,
            Span::new(23, 30),
            &[Span::new(0, 5), Span::new(13, 18)],
            "[PAD]",
        )
        .unwrap();
        assert_eq!(out, "[PAD] caused [PAD] and looting");
        assert_eq!(char_slice(&out, own), Some("looting"));
    }

    #[test]
    fn event_span_must_match_mention() {
        let err = Event::new("x", "storm", "a storm came", Span::new(0, 5), "T");
        assert!(matches!(err, Err(EcgError::MentionMismatch { .. })));
        let err = Event::new("x", "storm", "a storm", Span::new(2, 9), "T");
        assert!(matches!(err, Err(EcgError::SpanOutOfBounds { .. })));
        let err = Event::new("x", "", "a storm", Span::new(0, 0), "T");
        assert!(matches!(err, Err(EcgError::EmptyMention(_))));
    }

    fn pool_graphs(n: usize) -> Vec<EventCausalityGraph> {
        (0..n)
            .map(|i| {
                let a = format!("g{i}a");
                let b = format!("g{i}b");
                EventCausalityGraph::new(
                    format!("d{i}"),
                    format!("d{i}#0"),
                    vec![ev(&a), ev(&b)],
                    vec![CausalEdge::new(a, b)],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn sampling_is_deterministic_and_excludes_source() {
        let graphs = pool_graphs(11);
        let pool = CandidatePool::from_graphs(&graphs);
        let draft = make_instances(&graphs[0]).remove(0);
        let first = sample_candidates(&draft, "i0", &pool, 4, 7).unwrap();
        let second = sample_candidates(&draft, "i0", &pool, 4, 7).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.candidates.len(), 4);
        assert_eq!(first.gold_index().map(|_| ()), Some(()));
        assert!(first.validate(Some(4)).is_ok());
        assert_eq!(pool.available_for("d0#0", &draft.gold.to_candidate()), 10);
    }

    #[test]
    fn sampling_reports_small_pool() {
        let graphs = pool_graphs(3);
        let pool = CandidatePool::from_graphs(&graphs);
        let draft = make_instances(&graphs[0]).remove(0);
        assert_eq!(
            sample_candidates(&draft, "i0", &pool, 8, 1),
            Err(EcgError::PoolTooSmall {
                required: 7,
                available: 2
            })
        );
    }

    #[test]
    fn pool_dedups_identical_tails() {
        let mut graphs = pool_graphs(2);
        // second graph's tail duplicates the first one's text exactly
        graphs[1].nodes[1] = Event {
            event_id: "g1b".into(),
            ..ev("g0b")
        };
        let pool = CandidatePool::from_graphs(&graphs);
        assert_eq!(pool.len(), 1);
    }
}
