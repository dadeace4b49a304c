//! Zero-shot LLM baseline: prompt assembly, response parsing and rank scoring
//! behind a swappable transport (live HTTP or recorded replay).

mod prompt;
mod transport;

pub use prompt::{
    build_prompt, parse_and_score, parse_response, LlmPrompt, LlmResponse, MatchMode,
    REQUESTED_EVENTS,
};
pub use transport::{
    evaluate_llm, Exchange, HttpTransport, LlmError, LlmRequest, RecordingTransport,
    ReplayTransport, Transport, API_KEY_ENV, ENDPOINT_ENV,
};
