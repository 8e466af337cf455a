//! Remote chat-completions backend.
//!
//! Generation capabilities post a single-turn message list where video
//! frames travel as media references (URLs or data: payloads) and all
//! scene-graph context is plain text; the reply is the first choice's
//! message content. Text embeddings come from an optional embeddings
//! endpoint (token-level `[[..]]` or pooled `[..]` replies are both
//! accepted; pooled replies are wrapped as a 1 x d matrix) and fall back to
//! the deterministic hashing embedder when none is configured.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::embedding::{HashingEmbedder, TokenEmbeddingMatrix, DEFAULT_HASHING_DIM};

use super::{
    AnswerRequest, BackendError, ModelBackend, QueryParseRequest, RetryPolicy, SceneGraphRequest,
    TriggerRequest,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Chat-completions endpoint URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key; sent as a bearer token
    /// when set and non-empty.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    /// Cap on in-flight requests through this backend.
    pub max_concurrent_requests: usize,
    /// Embeddings endpoint; hashing embedder is used when absent.
    pub embed_endpoint: Option<String>,
    pub embed_model: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".to_string(),
            model: "default".to_string(),
            api_key_env: None,
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 250,
            max_concurrent_requests: 4,
            embed_endpoint: None,
            embed_model: None,
        }
    }
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    capacity: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut count = self.in_flight.lock().expect("gate poisoned");
        while *count >= self.capacity {
            count = self.freed.wait(count).expect("gate poisoned");
        }
        *count += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.gate.in_flight.lock().expect("gate poisoned");
        *count -= 1;
        self.gate.freed.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
    hashing: HashingEmbedder,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        let gate = Gate::new(config.max_concurrent_requests);
        Self {
            config,
            agent,
            gate,
            hashing: HashingEmbedder::new(DEFAULT_HASHING_DIM),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.config.retries,
            backoff_ms: self.config.backoff_ms,
        }
    }

    fn api_key(&self) -> Option<String> {
        let var = self.config.api_key_env.as_deref()?;
        std::env::var(var).ok().filter(|v| !v.is_empty())
    }

    /// Build the chat request body: frames as media parts, prompt as text.
    pub fn chat_body(&self, frames: &[String], prompt: &str) -> Value {
        let mut content: Vec<Value> = frames
            .iter()
            .map(|frame| json!({"type": "image_url", "image_url": {"url": frame}}))
            .collect();
        content.push(json!({"type": "text", "text": prompt}));
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0,
        })
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let _slot = self.gate.acquire();
        let mut request = self.agent.post(url);
        if let Some(key) = self.api_key() {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(classify)?;
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| BackendError::InvalidResponse(format!("malformed JSON reply: {e}")))
    }

    fn chat(&self, frames: &[String], prompt: &str) -> Result<String, BackendError> {
        let body = self.chat_body(frames, prompt);
        self.retry_policy().run(|| {
            let reply = self.post(&self.config.endpoint, &body)?;
            reply["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| {
                    BackendError::InvalidResponse(
                        "reply carries no choices[0].message.content string".into(),
                    )
                })
        })
    }
}

fn classify(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(reason) => BackendError::Timeout(reason.to_string()),
        ureq::Error::StatusCode(code) => BackendError::Unavailable(format!("HTTP status {code}")),
        other => BackendError::Unavailable(other.to_string()),
    }
}

/// Parse an embeddings reply: `data[0].embedding` as either a pooled vector
/// or token-level rows.
fn matrix_from_embedding_reply(reply: &Value) -> Result<TokenEmbeddingMatrix, BackendError> {
    let embedding = &reply["data"][0]["embedding"];
    let rows: Vec<Vec<f64>> = if let Some(rows) = embedding
        .as_array()
        .filter(|a| !a.is_empty() && a[0].is_array())
    {
        rows.iter()
            .map(|row| {
                row.as_array()
                    .map(|vals| vals.iter().filter_map(Value::as_f64).collect())
                    .ok_or_else(|| BackendError::InvalidResponse("ragged embedding rows".into()))
            })
            .collect::<Result<_, _>>()?
    } else if let Some(flat) = embedding.as_array() {
        vec![flat.iter().filter_map(Value::as_f64).collect()]
    } else {
        return Err(BackendError::InvalidResponse(
            "reply carries no data[0].embedding array".into(),
        ));
    };
    Ok(TokenEmbeddingMatrix::from_rows(rows)?)
}

impl ModelBackend for RemoteBackend {
    fn generate_scene_graph(&self, req: &SceneGraphRequest<'_>) -> Result<String, BackendError> {
        self.chat(req.frames, &req.prompt)
    }

    fn parse_query(&self, req: &QueryParseRequest<'_>) -> Result<String, BackendError> {
        self.chat(&[], &req.prompt)
    }

    fn trigger_decision(&self, req: &TriggerRequest<'_>) -> Result<String, BackendError> {
        self.chat(req.frames, &req.prompt)
    }

    fn generate_answer(&self, req: &AnswerRequest<'_>) -> Result<String, BackendError> {
        self.chat(req.frames, &req.prompt)
    }

    fn embed_text(&self, text: &str) -> Result<TokenEmbeddingMatrix, BackendError> {
        let Some(endpoint) = self.config.embed_endpoint.clone() else {
            return Ok(self.hashing.embed(text)?);
        };
        let model = self
            .config
            .embed_model
            .clone()
            .unwrap_or_else(|| self.config.model.clone());
        let body = json!({"model": model, "input": text});
        self.retry_policy().run(|| {
            let reply = self.post(&endpoint, &body)?;
            matrix_from_embedding_reply(&reply)
        })
    }
}
