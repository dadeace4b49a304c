//! Deterministic synthetic corpora for tests and CPU-scale experiments.
//!
//! Every event gets a unique pseudo-word mention, so candidate sets never
//! contain lexical duplicates. Each document is one weakly connected DAG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AnnotatedEvent, CorpusDocument};
use crate::ecg::{CausalEdge, Event, Span};

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "pu", "ra", "so", "ti", "vu", "we", "xo", "za", "be", "du", "fi", "go",
];
const FILLERS: [&str; 12] = [
    "the", "a", "report", "said", "after", "then", "local", "officials", "near", "city", "was",
    "and",
];
const TYPES: [&str; 8] = [
    "attack", "movement", "damage", "arrest", "protest", "disaster", "rescue", "trade",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub docs: usize,
    pub topics: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Probability of each extra forward edge beyond the spanning tree.
    pub extra_edge_prob: f64,
    /// Probability that an event is placed in the previous event's sentence.
    pub shared_sentence_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            docs: 24,
            topics: 8,
            min_nodes: 5,
            max_nodes: 9,
            extra_edge_prob: 0.15,
            shared_sentence_prob: 0.2,
            seed: 7,
        }
    }
}

/// Unique pronounceable word for every index.
pub fn pseudo_word(mut n: usize) -> String {
    let mut parts = Vec::new();
    for _ in 0..3 {
        parts.push(SYLLABLES[n % 16]);
        n /= 16;
    }
    while n > 0 {
        parts.push(SYLLABLES[n % 16]);
        n /= 16;
    }
    parts.reverse();
    parts.concat()
}

pub fn synth_corpus(config: &SynthConfig) -> Vec<CorpusDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut next_word = 0usize;
    (0..config.docs)
        .map(|d| {
            let n = rng.random_range(config.min_nodes..=config.max_nodes.max(config.min_nodes));
            let mut edges = Vec::new();
            for i in 1..n {
                let parent = rng.random_range(0..i);
                edges.push((parent, i));
                for j in 0..i {
                    if j != parent && rng.random_bool(config.extra_edge_prob) {
                        edges.push((j, i));
                    }
                }
            }
            let mut sentences: Vec<String> = Vec::new();
            let mut events = Vec::new();
            for i in 0..n {
                let mention = pseudo_word(next_word);
                next_word += 1;
                let event_type = TYPES[rng.random_range(0..TYPES.len())];
                let share = i > 0 && rng.random_bool(config.shared_sentence_prob);
                let (sent_id, prefix) = if share {
                    let last = sentences.len() - 1;
                    (last, format!("{} {} ", sentences[last], FILLERS[11]))
                } else {
                    let a = FILLERS[rng.random_range(0..FILLERS.len())];
                    let b = FILLERS[rng.random_range(0..FILLERS.len())];
                    (sentences.len(), format!("{a} {b} "))
                };
                let start = prefix.chars().count();
                let tail = FILLERS[rng.random_range(0..FILLERS.len())];
                let sentence = format!("{prefix}{mention} {tail} .");
                if share {
                    sentences[sent_id] = sentence.clone();
                } else {
                    sentences.push(sentence.clone());
                }
                let span = Span::new(start, start + mention.chars().count());
                events.push(AnnotatedEvent {
                    sent_id,
                    event: Event {
                        event_id: format!("e{i}"),
                        mention,
                        sentence,
                        mention_span: span,
                        event_type: event_type.to_string(),
                    },
                });
            }
            // earlier events in a shared sentence now see the extended text
            for ev in events.iter_mut() {
                ev.event.sentence = sentences[ev.sent_id].clone();
            }
            CorpusDocument {
                doc_id: format!("syn{d:04}"),
                topic_id: ((d % config.topics.max(1)) + 1).to_string(),
                sentences,
                event_annotations: events,
                causal_annotations: edges
                    .into_iter()
                    .map(|(c, e)| CausalEdge::new(format!("e{c}"), format!("e{e}")))
                    .collect(),
            }
        })
        .collect()
}

/// The document as one line of the `esc` corpus dialect.
pub fn esc_record(doc: &CorpusDocument) -> serde_json::Value {
    serde_json::json!({
        "doc_id": doc.doc_id,
        "topic_id": doc.topic_id,
        "sentences": doc.sentences,
        "events": doc.event_annotations.iter().map(|a| serde_json::json!({
            "event_id": a.event.event_id,
            "sent_id": a.sent_id,
            "start": a.event.mention_span.start,
            "end": a.event.mention_span.end,
            "mention": a.event.mention,
            "event_type": a.event.event_type,
        })).collect::<Vec<_>>(),
        "relations": doc.causal_annotations.iter()
            .map(|e| (e.cause_id.clone(), e.effect_id.clone()))
            .collect::<Vec<_>>(),
    })
}
