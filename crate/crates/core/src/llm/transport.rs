use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::prompt::{build_prompt, parse_and_score, parse_response, MatchMode};
use crate::ecg::CgepInstance;
use crate::metrics::RankRecord;

pub const API_KEY_ENV: &str = "CGEP_LLM_API_KEY";
pub const ENDPOINT_ENV: &str = "CGEP_LLM_ENDPOINT";
const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no recorded exchange for instance `{instance_id}` (fingerprint {fingerprint})")]
    MissingRecording {
        instance_id: String,
        fingerprint: String,
    },
    #[error("environment variable {0} is not set")]
    MissingCredential(&'static str),
    #[error("http: {0}")]
    Http(String),
    #[error("{path}: {message}")]
    Store { path: PathBuf, message: String },
    #[error(transparent)]
    Prompt(#[from] crate::linearize::LinearizeError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub instance_id: String,
    pub model: String,
    pub prompt: String,
}

impl LlmRequest {
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model.as_bytes());
        h.update([0u8]);
        h.update(self.prompt.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A persisted request/response pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub fingerprint: String,
    pub instance_id: String,
    pub model: String,
    pub prompt: String,
    pub response: String,
}

pub trait Transport {
    fn complete(&mut self, request: &LlmRequest) -> Result<String, LlmError>;
}

/// Serves responses from `<dir>/*.json` exchanges, matched by fingerprint.
pub struct ReplayTransport {
    exchanges: BTreeMap<String, Exchange>,
}

impl ReplayTransport {
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        let store_err = |message: String| LlmError::Store {
            path: dir.to_path_buf(),
            message,
        };
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| store_err(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut exchanges = BTreeMap::new();
        for path in files {
            let text = fs::read_to_string(&path).map_err(|e| LlmError::Store {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let ex: Exchange = serde_json::from_str(&text).map_err(|e| LlmError::Store {
                path: path.clone(),
                message: e.to_string(),
            })?;
            exchanges.insert(ex.fingerprint.clone(), ex);
        }
        Ok(ReplayTransport { exchanges })
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn complete(&mut self, request: &LlmRequest) -> Result<String, LlmError> {
        let fingerprint = request.fingerprint();
        self.exchanges
            .get(&fingerprint)
            .map(|e| e.response.clone())
            .ok_or(LlmError::MissingRecording {
                instance_id: request.instance_id.clone(),
                fingerprint,
            })
    }
}

/// OpenAI-compatible chat-completions client. Calls are sequential and spaced
/// by at least `min_interval`.
pub struct HttpTransport {
    endpoint: String,
    api_key: String,
    pub min_interval: Duration,
    last_call: Option<Instant>,
}

impl HttpTransport {
    pub fn from_env() -> Result<Self, LlmError> {
        let api_key =
            std::env::var(API_KEY_ENV).map_err(|_| LlmError::MissingCredential(API_KEY_ENV))?;
        let endpoint = std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.into());
        Ok(HttpTransport {
            endpoint,
            api_key,
            min_interval: Duration::from_millis(500),
            last_call: None,
        })
    }
}

impl Transport for HttpTransport {
    fn complete(&mut self, request: &LlmRequest) -> Result<String, LlmError> {
        if let Some(last) = self.last_call {
            let elapsed = last.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        self.last_call = Some(Instant::now());
        let body = serde_json::json!({
            "model": request.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let mut response = ureq::post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| LlmError::Http(e.to_string()))?;
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Http(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(String::from)
            .ok_or_else(|| LlmError::Http(format!("unexpected response shape: {value}")))
    }
}

/// Wraps another transport and writes every exchange to `dir`.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Self {
        RecordingTransport {
            inner,
            dir: dir.into(),
        }
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn complete(&mut self, request: &LlmRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(request)?;
        let ex = Exchange {
            fingerprint: request.fingerprint(),
            instance_id: request.instance_id.clone(),
            model: request.model.clone(),
            prompt: request.prompt.clone(),
            response: response.clone(),
        };
        let path = self.dir.join(format!("{}.json", ex.fingerprint));
        let text = serde_json::to_string_pretty(&ex).expect("exchange serializes");
        fs::create_dir_all(&self.dir)
            .and_then(|_| fs::write(&path, text))
            .map_err(|e| LlmError::Store {
                path,
                message: e.to_string(),
            })?;
        Ok(response)
    }
}

/// Query every instance and score the generated lists. The fallback rank is
/// the instance's candidate-set size.
pub fn evaluate_llm<T: Transport + ?Sized>(
    instances: &[CgepInstance],
    transport: &mut T,
    model: &str,
    mode: MatchMode,
) -> Result<Vec<RankRecord>, LlmError> {
    instances
        .iter()
        .map(|inst| {
            let prompt = build_prompt(inst)?;
            let request = LlmRequest {
                instance_id: inst.instance_id.clone(),
                model: model.to_string(),
                prompt: prompt.text(),
            };
            let raw = transport.complete(&request)?;
            let response = parse_response(&raw);
            let mut record = parse_and_score(&response, inst, inst.candidates.len(), mode);
            // an empty reply still scores at the fallback position
            record.gold_rank.get_or_insert(inst.candidates.len());
            Ok(record)
        })
        .collect()
}
