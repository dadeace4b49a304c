//! Readers for the two annotation dialects.
//!
//! `esc`: one JSON document per line,
//! `{"doc_id", "topic_id", "sentences", "events": [{"event_id", "sent_id",
//! "start", "end", "mention", "event_type"}], "relations": [[cause, effect]]}`
//! with character offsets into the sentence.
//!
//! `maven`: MAVEN-ERE document lines (`id`, `tokens`, `sentences`, `events`
//! with token-offset `mentions`, `causal_relations` keyed by relation type).
//! The file stem (`train`, `valid`, `test`) becomes the document's split tag.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::{AnnotatedEvent, CorpusDocument, DatasetError, Result};
use crate::ecg::{CausalEdge, Event, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    Esc,
    Maven,
}

impl FromStr for CorpusFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "esc" => Ok(CorpusFormat::Esc),
            "maven" => Ok(CorpusFormat::Maven),
            other => Err(DatasetError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Deserialize)]
struct EscRecord {
    doc_id: String,
    #[serde(default)]
    topic_id: Option<String>,
    sentences: Vec<String>,
    events: Vec<EscEvent>,
    #[serde(default)]
    relations: Vec<(String, String)>,
}

#[derive(Deserialize)]
struct EscEvent {
    event_id: String,
    sent_id: usize,
    start: usize,
    end: usize,
    mention: String,
    event_type: String,
}

#[derive(Deserialize)]
struct MavenRecord {
    id: String,
    tokens: Vec<Vec<String>>,
    sentences: Vec<String>,
    events: Vec<MavenEvent>,
    #[serde(default)]
    causal_relations: BTreeMap<String, Vec<(String, String)>>,
}

#[derive(Deserialize)]
struct MavenEvent {
    id: String,
    #[serde(rename = "type")]
    event_type: String,
    mentions: Vec<MavenMention>,
}

#[derive(Deserialize)]
struct MavenMention {
    sent_id: usize,
    offset: (usize, usize),
}

fn corpus_files(path: &Path) -> Result<Vec<PathBuf>> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl" || x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Load every document under `corpus_path` (a file or a directory of `.jsonl` files).
pub fn ingest(corpus_path: &Path, format: CorpusFormat) -> Result<Vec<CorpusDocument>> {
    let files = corpus_files(corpus_path)?;
    if files.is_empty() {
        log::warn!("{}: no corpus files found", corpus_path.display());
    }
    let mut docs = Vec::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(|source| DatasetError::Io {
            path: file.clone(),
            source,
        })?;
        let split_tag = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fail = |message: String| DatasetError::Record {
                path: file.clone(),
                line: i + 1,
                message,
            };
            let doc = match format {
                CorpusFormat::Esc => {
                    let rec: EscRecord =
                        serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
                    esc_document(rec).map_err(fail)?
                }
                CorpusFormat::Maven => {
                    let rec: MavenRecord =
                        serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
                    maven_document(rec, &split_tag).map_err(fail)?
                }
            };
            docs.push(doc);
        }
    }
    Ok(docs)
}

fn esc_document(rec: EscRecord) -> std::result::Result<CorpusDocument, String> {
    let mut events = Vec::with_capacity(rec.events.len());
    for e in rec.events {
        let sentence = rec.sentences.get(e.sent_id).ok_or_else(|| {
            format!("event `{}` points at missing sentence {}", e.event_id, e.sent_id)
        })?;
        let event = Event::new(
            e.event_id,
            e.mention,
            sentence.clone(),
            Span::new(e.start, e.end),
            e.event_type,
        )
        .map_err(|err| err.to_string())?;
        events.push(AnnotatedEvent {
            sent_id: e.sent_id,
            event,
        });
    }
    Ok(CorpusDocument {
        doc_id: rec.doc_id,
        topic_id: rec.topic_id.unwrap_or_default(),
        sentences: rec.sentences,
        event_annotations: events,
        causal_annotations: rec
            .relations
            .into_iter()
            .map(|(c, e)| CausalEdge::new(c, e))
            .collect(),
    })
}

/// Character spans of `tokens` located left to right inside `sentence`.
fn token_spans(sentence: &str, tokens: &[String]) -> Option<Vec<Span>> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut cursor = 0;
    let mut spans = Vec::with_capacity(tokens.len());
    for token in tokens {
        let needle: Vec<char> = token.chars().collect();
        if needle.is_empty() {
            spans.push(Span::new(cursor, cursor));
            continue;
        }
        let found = (cursor..=chars.len().saturating_sub(needle.len()))
            .find(|&s| chars[s..s + needle.len()] == needle[..])?;
        spans.push(Span::new(found, found + needle.len()));
        cursor = found + needle.len();
    }
    Some(spans)
}

fn maven_document(rec: MavenRecord, split_tag: &str) -> std::result::Result<CorpusDocument, String> {
    let mut spans_per_sentence = Vec::with_capacity(rec.sentences.len());
    for (i, sentence) in rec.sentences.iter().enumerate() {
        let tokens = rec.tokens.get(i).map(Vec::as_slice).unwrap_or(&[]);
        spans_per_sentence.push(
            token_spans(sentence, tokens)
                .ok_or_else(|| format!("tokens of sentence {i} do not align with its text"))?,
        );
    }
    let mut events = Vec::with_capacity(rec.events.len());
    for e in rec.events {
        let m = e
            .mentions
            .first()
            .ok_or_else(|| format!("event `{}` has no mentions", e.id))?;
        let sentence = rec
            .sentences
            .get(m.sent_id)
            .ok_or_else(|| format!("event `{}` points at missing sentence {}", e.id, m.sent_id))?;
        let spans = &spans_per_sentence[m.sent_id];
        let (start, end) = m.offset;
        if start >= end || end > spans.len() {
            return Err(format!(
                "event `{}`: token offset [{start}, {end}) past sentence end",
                e.id
            ));
        }
        let span = Span::new(spans[start].start, spans[end - 1].end);
        let mention = crate::ecg::char_slice(sentence, span)
            .ok_or_else(|| format!("event `{}`: unresolvable span", e.id))?
            .to_string();
        let event = Event::new(e.id, mention, sentence.clone(), span, e.event_type)
            .map_err(|err| err.to_string())?;
        events.push(AnnotatedEvent {
            sent_id: m.sent_id,
            event,
        });
    }
    let mut edges = Vec::new();
    for (kind, pairs) in rec.causal_relations {
        if !matches!(kind.as_str(), "CAUSE" | "PRECONDITION") {
            continue;
        }
        edges.extend(pairs.into_iter().map(|(c, e)| CausalEdge::new(c, e)));
    }
    Ok(CorpusDocument {
        doc_id: rec.id,
        topic_id: split_tag.to_string(),
        sentences: rec.sentences,
        event_annotations: events,
        causal_annotations: edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_tags() {
        assert_eq!("ESC".parse::<CorpusFormat>().unwrap(), CorpusFormat::Esc);
        assert!(matches!(
            "ace".parse::<CorpusFormat>(),
            Err(DatasetError::UnknownFormat(_))
        ));
    }

    #[test]
    fn token_alignment() {
        let toks: Vec<String> = ["The", "flood", "hit", "."].iter().map(|s| s.to_string()).collect();
        let spans = token_spans("The flood hit.", &toks).unwrap();
        assert_eq!(spans[1], Span::new(4, 9));
        assert_eq!(spans[3], Span::new(13, 14));
        assert!(token_spans("The flood", &["storm".to_string()]).is_none());
    }

    #[test]
    fn empty_directory_yields_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ingest(dir.path(), CorpusFormat::Esc).unwrap().is_empty());
    }

    #[test]
    fn span_past_sentence_end_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"doc_id":"d1","topic_id":"1","sentences":["a storm"],"events":[{"event_id":"e1","sent_id":0,"start":2,"end":12,"mention":"storm","event_type":"T"}]}"#,
        )
        .unwrap();
        let err = ingest(dir.path(), CorpusFormat::Esc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.jsonl:1"), "{msg}");
        assert!(msg.contains("e1"), "{msg}");
    }

    #[test]
    fn maven_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("valid.jsonl");
        std::fs::write(
            &path,
            r#"{"id":"m1","title":"t","tokens":[["Heavy","rain","caused","a","flood","."]],"sentences":["Heavy rain caused a flood."],"events":[{"id":"E1","type":"Weather","mentions":[{"id":"x","trigger_word":"Heavy rain","sent_id":0,"offset":[0,2]}]},{"id":"E2","type":"Catastrophe","mentions":[{"id":"y","trigger_word":"flood","sent_id":0,"offset":[4,5]}]}],"causal_relations":{"CAUSE":[["E1","E2"]],"PRECONDITION":[]},"temporal_relations":{}}"#,
        )
        .unwrap();
        let docs = ingest(dir.path(), CorpusFormat::Maven).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].topic_id, "valid");
        assert_eq!(docs[0].event_annotations[0].event.mention, "Heavy rain");
        assert_eq!(docs[0].causal_annotations, vec![CausalEdge::new("E1", "E2")]);
    }
}
