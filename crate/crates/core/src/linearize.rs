//! Distance-sensitive linearization of an event causality graph into a
//! masked prompt, plus the parallel template over event types.
//!
//! A template reads
//! `[CLS] c1 causes e1 [SEP] ... cn causes en [SEP] anchor causes [MASK] [SEP]`
//! with triples ordered farthest-first from the anchor, so the triple nearest
//! the anchor sits right before the prompt.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecg::{EcgError, EventCausalityGraph, EventId};
use crate::tokenize::Tokenizer;

pub const CONNECTIVE: &str = "causes";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinearizeError {
    #[error(transparent)]
    Graph(#[from] EcgError),
    #[error("prompt segment needs {required} tokens but the budget is {max}")]
    PromptTooLong { required: usize, max: usize },
    #[error("event `{0}` has no event type")]
    MissingEventType(String),
    #[error("triples must have distances assigned before ordering")]
    DistanceUnset,
}

pub type Result<T> = std::result::Result<T, LinearizeError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleTemplate {
    pub cause_id: EventId,
    pub effect_id: EventId,
    pub cause_mention: String,
    pub effect_mention: String,
    pub distance: Option<usize>,
}

impl TripleTemplate {
    pub fn text(&self) -> String {
        format!("{} {CONNECTIVE} {}", self.cause_mention, self.effect_mention)
    }

    pub fn source_edge(&self) -> (&str, &str) {
        (&self.cause_id, &self.effect_id)
    }
}

/// One triple per edge, in `(cause_id, effect_id)` order.
pub fn extract_triples(graph: &EventCausalityGraph) -> Vec<TripleTemplate> {
    graph
        .edges
        .iter()
        .map(|e| TripleTemplate {
            cause_id: e.cause_id.clone(),
            effect_id: e.effect_id.clone(),
            cause_mention: graph.node(&e.cause_id).expect("edge endpoint").mention.clone(),
            effect_mention: graph.node(&e.effect_id).expect("edge endpoint").mention.clone(),
            distance: None,
        })
        .collect()
}

/// Distance of each triple = undirected hops from its cause to the anchor.
pub fn assign_distances(
    triples: Vec<TripleTemplate>,
    graph: &EventCausalityGraph,
    anchor_id: &str,
) -> Result<Vec<TripleTemplate>> {
    let from_anchor = graph.distances_from(anchor_id)?;
    triples
        .into_iter()
        .map(|mut t| {
            let d = from_anchor.get(&t.cause_id).copied().ok_or_else(|| {
                EcgError::Unreachable {
                    from: t.cause_id.clone(),
                    to: anchor_id.to_string(),
                }
            })?;
            t.distance = Some(d);
            Ok(t)
        })
        .collect()
}

/// Stable sort by non-increasing distance.
pub fn order_triples(mut triples: Vec<TripleTemplate>) -> Result<Vec<TripleTemplate>> {
    if triples.iter().any(|t| t.distance.is_none()) {
        return Err(LinearizeError::DistanceUnset);
    }
    triples.sort_by_key(|t| std::cmp::Reverse(t.distance));
    Ok(triples)
}

/// Seeded random order, used when distance ordering is ablated.
pub fn shuffle_triples(mut triples: Vec<TripleTemplate>, seed: u64) -> Vec<TripleTemplate> {
    triples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    triples
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentRole {
    /// The leading `[CLS]`.
    Begin,
    /// The n-th triple and its trailing separator.
    Triple(usize),
    /// `anchor causes [MASK] [SEP]`.
    Prompt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSlot {
    pub segment: SegmentRole,
    pub event_id: Option<EventId>,
    pub occurrence: Option<usize>,
}

impl TokenSlot {
    pub fn is_event_mention(&self) -> bool {
        self.event_id.is_some()
    }
}

/// Positions of one textual occurrence of an event inside a template.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventOccurrence {
    pub event_id: EventId,
    pub segment: SegmentRole,
    pub positions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPromptTemplate {
    pub segments: Vec<TripleTemplate>,
    pub anchor_id: EventId,
    pub prompt: String,
    pub tokens: Vec<String>,
    pub layout: Vec<TokenSlot>,
    /// Cause then effect for every segment, then the anchor of the prompt.
    pub occurrences: Vec<EventOccurrence>,
    pub mask_position: usize,
    /// Triples removed to respect the token budget.
    pub dropped: usize,
}

impl GraphPromptTemplate {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

struct Builder<'t, T: ?Sized> {
    tokenizer: &'t T,
    tokens: Vec<String>,
    layout: Vec<TokenSlot>,
    occurrences: Vec<EventOccurrence>,
}

impl<'t, T: Tokenizer + ?Sized> Builder<'t, T> {
    fn plain(&mut self, token: &str, segment: SegmentRole) {
        self.tokens.push(token.to_string());
        self.layout.push(TokenSlot {
            segment,
            event_id: None,
            occurrence: None,
        });
    }

    fn words(&mut self, text: &str, segment: SegmentRole) {
        for piece in self.tokenizer.pieces(text) {
            self.plain(&piece, segment);
        }
    }

    fn event(&mut self, event_id: &str, label: &str, segment: SegmentRole) {
        let occ = self.occurrences.len();
        let mut positions = Vec::new();
        for piece in self.tokenizer.pieces(label) {
            positions.push(self.tokens.len());
            self.tokens.push(piece);
            self.layout.push(TokenSlot {
                segment,
                event_id: Some(event_id.to_string()),
                occurrence: Some(occ),
            });
        }
        self.occurrences.push(EventOccurrence {
            event_id: event_id.to_string(),
            segment,
            positions,
        });
    }
}

fn count<T: Tokenizer + ?Sized>(tokenizer: &T, text: &str) -> usize {
    tokenizer.tokenize(text).len()
}

fn build<T, F>(
    segments: Vec<TripleTemplate>,
    anchor_id: &str,
    label: F,
    tokenizer: &T,
    dropped: usize,
) -> GraphPromptTemplate
where
    T: Tokenizer + ?Sized,
    F: Fn(&str) -> String,
{
    let specials = tokenizer.specials().clone();
    let mut b = Builder {
        tokenizer,
        tokens: Vec::new(),
        layout: Vec::new(),
        occurrences: Vec::new(),
    };
    b.plain(&specials.cls, SegmentRole::Begin);
    for (i, t) in segments.iter().enumerate() {
        let role = SegmentRole::Triple(i);
        b.event(&t.cause_id, &label(&t.cause_id), role);
        b.words(CONNECTIVE, role);
        b.event(&t.effect_id, &label(&t.effect_id), role);
        b.plain(&specials.sep, role);
    }
    let anchor_label = label(anchor_id);
    b.event(anchor_id, &anchor_label, SegmentRole::Prompt);
    b.words(CONNECTIVE, SegmentRole::Prompt);
    let mask_position = b.tokens.len();
    b.plain(&specials.mask, SegmentRole::Prompt);
    b.plain(&specials.sep, SegmentRole::Prompt);
    GraphPromptTemplate {
        segments,
        anchor_id: anchor_id.to_string(),
        prompt: format!("{anchor_label} {CONNECTIVE} {}", specials.mask),
        tokens: b.tokens,
        layout: b.layout,
        occurrences: b.occurrences,
        mask_position,
        dropped,
    }
}

/// Render ordered triples into the mention template, dropping whole triples
/// from the far end until the sequence fits `max_tokens`.
pub fn render<T: Tokenizer + ?Sized>(
    graph: &EventCausalityGraph,
    ordered: Vec<TripleTemplate>,
    anchor_id: &str,
    max_tokens: Option<usize>,
    tokenizer: &T,
) -> Result<GraphPromptTemplate> {
    let anchor = graph.require(anchor_id)?;
    let connective = count(tokenizer, CONNECTIVE);
    // [CLS] + anchor + causes + [MASK] + [SEP]
    let prompt_len = 1 + count(tokenizer, &anchor.mention) + connective + 2;
    let mut ordered = ordered;
    let mut dropped = 0;
    if let Some(max) = max_tokens {
        if prompt_len > max {
            return Err(LinearizeError::PromptTooLong {
                required: prompt_len,
                max,
            });
        }
        let sizes: Vec<usize> = ordered
            .iter()
            .map(|t| {
                count(tokenizer, &t.cause_mention)
                    + connective
                    + count(tokenizer, &t.effect_mention)
                    + 1
            })
            .collect();
        let mut total = prompt_len + sizes.iter().sum::<usize>();
        while total > max {
            total -= sizes[dropped];
            dropped += 1;
        }
        ordered.drain(..dropped);
    }
    Ok(build(
        ordered,
        anchor_id,
        |id| graph.node(id).expect("segment endpoint").mention.clone(),
        tokenizer,
        dropped,
    ))
}

/// The same segments as `mention`, with each event spelled as its type.
pub fn schema_template<T: Tokenizer + ?Sized>(
    graph: &EventCausalityGraph,
    mention: &GraphPromptTemplate,
    tokenizer: &T,
) -> Result<GraphPromptTemplate> {
    for occ in &mention.occurrences {
        let event = graph.require(&occ.event_id)?;
        if event.event_type.trim().is_empty() {
            return Err(LinearizeError::MissingEventType(event.event_id.clone()));
        }
    }
    Ok(build(
        mention.segments.clone(),
        &mention.anchor_id,
        |id| graph.node(id).expect("checked above").event_type.clone(),
        tokenizer,
        mention.dropped,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TripleOrder {
    /// Farthest-first by undirected distance to the anchor.
    Distance,
    /// Seeded shuffle.
    Shuffled(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Linearization {
    pub mention: GraphPromptTemplate,
    pub schema: GraphPromptTemplate,
}

/// Full pipeline: extract, measure, order, render, then align the schema template.
pub fn linearize<T: Tokenizer + ?Sized>(
    graph: &EventCausalityGraph,
    anchor_id: &str,
    order: TripleOrder,
    max_tokens: Option<usize>,
    tokenizer: &T,
) -> Result<Linearization> {
    let triples = assign_distances(extract_triples(graph), graph, anchor_id)?;
    let ordered = match order {
        TripleOrder::Distance => order_triples(triples)?,
        TripleOrder::Shuffled(seed) => shuffle_triples(triples, seed),
    };
    let mention = render(graph, ordered, anchor_id, max_tokens, tokenizer)?;
    let schema = schema_template(graph, &mention, tokenizer)?;
    Ok(Linearization { mention, schema })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecg::{CausalEdge, Event, Span};
    use crate::tokenize::{SpecialTokens, WordTokenizer};

    fn ev(id: &str, mention: &str, ty: &str) -> Event {
        let sentence = format!("so {mention} followed");
        Event::new(id, mention, sentence, Span::new(3, 3 + mention.chars().count()), ty).unwrap()
    }

    fn chain() -> EventCausalityGraph {
        EventCausalityGraph::new(
            "d",
            "d#0",
            vec![ev("a", "A", "TA"), ev("b", "B", "TB"), ev("c", "C", "TC")],
            vec![CausalEdge::new("a", "b"), CausalEdge::new("b", "c")],
        )
        .unwrap()
    }

    fn short_tokenizer() -> WordTokenizer {
        WordTokenizer::new(
            SpecialTokens {
                cls: "[C]".into(),
                sep: "[S]".into(),
                ..SpecialTokens::default()
            },
            false,
        )
    }

    #[test]
    fn triples_follow_edges() {
        let g = chain();
        let t = extract_triples(&g);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].source_edge(), ("a", "b"));
        assert_eq!(t[0].text(), "A causes B");
    }

    #[test]
    fn distances_on_chain() {
        let g = chain();
        let t = assign_distances(extract_triples(&g), &g, "c").unwrap();
        assert_eq!(t[0].distance, Some(2));
        assert_eq!(t[1].distance, Some(1));
        let t = assign_distances(extract_triples(&g), &g, "a").unwrap();
        assert_eq!(t[0].distance, Some(0));
    }

    fn with_distances(ds: &[usize]) -> Vec<TripleTemplate> {
        ds.iter()
            .enumerate()
            .map(|(i, d)| TripleTemplate {
                cause_id: format!("c{i}"),
                effect_id: format!("e{i}"),
                cause_mention: format!("c{i}"),
                effect_mention: format!("e{i}"),
                distance: Some(*d),
            })
            .collect()
    }

    #[test]
    fn ordering_is_descending_and_stable() {
        let ordered = order_triples(with_distances(&[1, 3, 2])).unwrap();
        let ds: Vec<_> = ordered.iter().map(|t| t.distance.unwrap()).collect();
        assert_eq!(ds, [3, 2, 1]);
        let ordered = order_triples(with_distances(&[2, 2, 2])).unwrap();
        let ids: Vec<_> = ordered.iter().map(|t| t.cause_id.as_str()).collect();
        assert_eq!(ids, ["c0", "c1", "c2"]);
        let mut unset = with_distances(&[1]);
        unset[0].distance = None;
        assert_eq!(order_triples(unset), Err(LinearizeError::DistanceUnset));
    }

    #[test]
    fn renders_template_shape() {
        let g = chain();
        let lin = linearize(&g, "c", TripleOrder::Distance, None, &short_tokenizer()).unwrap();
        assert_eq!(
            lin.mention.text(),
            "[C] A causes B [S] B causes C [S] C causes [MASK] [S]"
        );
        assert_eq!(lin.mention.tokens[lin.mention.mask_position], "[MASK]");
        assert_eq!(lin.mention.prompt, "C causes [MASK]");
        assert_eq!(lin.mention.occurrences.len(), 5);
        assert_eq!(
            lin.schema.text(),
            "[C] TA causes TB [S] TB causes TC [S] TC causes [MASK] [S]"
        );
    }

    #[test]
    fn budget_drops_farthest_triple() {
        let g = chain();
        // full length 13; 12 forces exactly one drop (each triple costs 4)
        let lin = linearize(&g, "c", TripleOrder::Distance, Some(12), &short_tokenizer()).unwrap();
        assert_eq!(lin.mention.text(), "[C] B causes C [S] C causes [MASK] [S]");
        assert_eq!(lin.mention.dropped, 1);
        assert_eq!(lin.schema.segments, lin.mention.segments);
        assert_eq!(lin.schema.text(), "[C] TB causes TC [S] TC causes [MASK] [S]");
    }

    #[test]
    fn prompt_only_and_too_small_budget() {
        let g = chain();
        let lin = linearize(&g, "c", TripleOrder::Distance, Some(5), &short_tokenizer()).unwrap();
        assert_eq!(lin.mention.text(), "[C] C causes [MASK] [S]");
        assert_eq!(lin.mention.dropped, 2);
        assert_eq!(
            linearize(&g, "c", TripleOrder::Distance, Some(4), &short_tokenizer()),
            Err(LinearizeError::PromptTooLong {
                required: 5,
                max: 4
            })
        );
    }

    #[test]
    fn multiword_mentions_mark_every_piece() {
        let g = EventCausalityGraph::new(
            "d",
            "d#0",
            vec![ev("a", "heavy rain", "Weather"), ev("b", "flood", "Disaster")],
            vec![CausalEdge::new("a", "b")],
        )
        .unwrap();
        let lin = linearize(&g, "b", TripleOrder::Distance, None, &short_tokenizer()).unwrap();
        let cause = &lin.mention.occurrences[0];
        assert_eq!(cause.positions, vec![1, 2]);
        for p in &cause.positions {
            assert_eq!(lin.mention.layout[*p].event_id.as_deref(), Some("a"));
        }
        assert!(!lin.mention.layout[3].is_event_mention());
    }

    #[test]
    fn missing_type_is_rejected() {
        let mut g = chain();
        g.nodes[0].event_type.clear();
        assert_eq!(
            linearize(&g, "c", TripleOrder::Distance, None, &short_tokenizer()),
            Err(LinearizeError::MissingEventType("a".into()))
        );
    }
}
