use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ecg::CgepInstance;
use crate::linearize::{assign_distances, extract_triples, order_triples, LinearizeError};
use crate::metrics::RankRecord;

/// How many events the model is asked to list; more than 50 so that
/// filtering out non-candidates still leaves a usable top 50.
pub const REQUESTED_EVENTS: usize = 60;

const GRAPH_DEFINITION: &str = "A causal event graph is a directed graph whose nodes are events \
and whose edges are causal relations. An edge from event A to event B means that A causes B. \
Each event is given by its trigger word(s) and the sentence it occurs in.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmPrompt {
    pub graph_definition: String,
    /// `[i] mention: sentence`, in event index order.
    pub event_texts: Vec<String>,
    /// Causal triples, farthest from the anchor first.
    pub triples: Vec<String>,
    pub candidate_block: String,
    pub query: String,
    pub instruction: String,
}

impl LlmPrompt {
    pub fn text(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.graph_definition);
        s.push_str("\n\nEvents:\n");
        for e in &self.event_texts {
            s.push_str(e);
            s.push('\n');
        }
        s.push_str("\nCausal graph:\n");
        for t in &self.triples {
            s.push_str(t);
            s.push('\n');
        }
        s.push_str("\nCandidate events:\n");
        s.push_str(&self.candidate_block);
        s.push('\n');
        s.push_str(&self.query);
        s.push('\n');
        s.push_str(&self.instruction);
        s.push('\n');
        s
    }
}

pub fn build_prompt(instance: &CgepInstance) -> Result<LlmPrompt, LinearizeError> {
    let graph = &instance.graph;
    let triples = order_triples(assign_distances(
        extract_triples(graph),
        graph,
        &instance.anchor_id,
    )?)?;
    let event_texts = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, e)| format!("[{}] {}: {}", i + 1, e.mention, e.sentence))
        .collect();
    let mut seen = BTreeSet::new();
    let mut lines = Vec::new();
    for c in &instance.candidates {
        if seen.insert(c.mention.to_lowercase()) {
            lines.push(c.mention.clone());
        }
    }
    Ok(LlmPrompt {
        graph_definition: GRAPH_DEFINITION.to_string(),
        event_texts,
        triples: triples.iter().map(|t| t.text()).collect(),
        candidate_block: lines.join("\n"),
        query: format!(
            "What are the subsequent events of {}?",
            instance.anchor().mention
        ),
        instruction: format!(
            "Select the {REQUESTED_EVENTS} most likely events from the candidate events, \
most likely first, one per line, using the candidate text exactly."
        ),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub raw_text: String,
    pub parsed_events: Vec<String>,
}

fn strip_marker(line: &str) -> &str {
    let line = line.trim();
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    let rest = if digits > 0 {
        let after = &line[digits..];
        after
            .strip_prefix(['.', ')', ':'])
            .unwrap_or(after)
    } else {
        line.strip_prefix(['-', '*', '•']).unwrap_or(line)
    };
    rest.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim()
}

/// Split a generated list into event strings, keeping generation order.
pub fn parse_response(raw: &str) -> LlmResponse {
    let lines: Vec<&str> = raw.lines().filter(|l| !l.trim().is_empty()).collect();
    let items: Vec<String> = if lines.len() == 1 && lines[0].contains(',') {
        lines[0].split(',').map(strip_marker).map(String::from).collect()
    } else {
        lines.into_iter().map(strip_marker).map(String::from).collect()
    };
    LlmResponse {
        raw_text: raw.to_string(),
        parsed_events: items.into_iter().filter(|s| !s.is_empty()).collect(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    /// Case-insensitive exact match on the mention.
    #[default]
    Exact,
    /// Also ignores punctuation and repeated whitespace.
    Loose,
}

impl MatchMode {
    fn key(self, s: &str) -> String {
        match self {
            MatchMode::Exact => s.trim().to_lowercase(),
            MatchMode::Loose => s
                .to_lowercase()
                .chars()
                .map(|c| if c.is_alphanumeric() { c } else { ' ' })
                .collect::<String>()
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

/// Keep generated events that are candidates (first occurrence only) and
/// rank the gold by its position among them.
pub fn parse_and_score(
    response: &LlmResponse,
    instance: &CgepInstance,
    fallback_rank: usize,
    mode: MatchMode,
) -> RankRecord {
    let candidates: BTreeSet<String> = instance
        .candidates
        .iter()
        .map(|c| mode.key(&c.mention))
        .collect();
    let gold = mode.key(&instance.gold.mention);
    let mut kept = Vec::new();
    let mut seen = BTreeSet::new();
    for event in &response.parsed_events {
        let key = mode.key(event);
        if candidates.contains(&key) && seen.insert(key.clone()) {
            kept.push(key);
        }
    }
    let gold_rank = if response.parsed_events.is_empty() {
        None
    } else {
        Some(
            kept.iter()
                .position(|k| *k == gold)
                .map_or(fallback_rank, |p| (p + 1).min(fallback_rank)),
        )
    };
    RankRecord {
        instance_id: instance.instance_id.clone(),
        gold_rank,
        candidate_count: instance.candidates.len(),
    }
}
