//! Corpus ingestion and CGEP dataset construction.

mod build;
mod ingest;
pub mod jsonl;
mod sep;
mod splits;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecg::{CausalEdge, EcgError, Event};

pub use build::{build_dataset, BuildOptions, BuiltDataset, DatasetStats};
pub use ingest::{ingest, CorpusFormat};
pub use sep::{
    extract_sep_chains, longest_chain_to, sep_document_split, SepInstance, SepSplit,
    MIN_CHAIN_NODES,
};
pub use splits::{make_splits, DatasetTag, DocumentMeta, Fold, SplitAssignment};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown format `{0}` (expected esc or maven)")]
    UnknownFormat(String),
    #[error("unknown dataset tag `{0}` (expected esc or maven)")]
    UnknownTag(String),
    #[error("document `{doc}`: {source}")]
    Document {
        doc: String,
        #[source]
        source: EcgError,
    },
    #[error(transparent)]
    Graph(#[from] EcgError),
    #[error("document `{0}` has no topic id")]
    MissingTopic(String),
    #[error("cross-validation needs at least 7 topics, found {0}")]
    NotEnoughTopics(usize),
    #[error("document `{doc}` has unexpected split tag `{tag}`")]
    UnknownSplitTag { doc: String, tag: String },
    #[error("failed to serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// An event annotation together with the index of its sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedEvent {
    pub sent_id: usize,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub doc_id: String,
    /// ESC topic, or the MAVEN-ERE split (`train` / `valid` / `test`).
    pub topic_id: String,
    pub sentences: Vec<String>,
    pub event_annotations: Vec<AnnotatedEvent>,
    pub causal_annotations: Vec<CausalEdge>,
}

impl CorpusDocument {
    pub fn meta(&self) -> DocumentMeta {
        DocumentMeta {
            doc_id: self.doc_id.clone(),
            topic_id: self.topic_id.clone(),
        }
    }
}
