//! Event causality graphs, graph-prompt linearization, dataset construction,
//! ranking metrics and the zero-shot LLM baseline.

pub mod dataset;
pub mod ecg;
pub mod linearize;
pub mod llm;
pub mod metrics;
pub mod synth;
pub mod tokenize;
