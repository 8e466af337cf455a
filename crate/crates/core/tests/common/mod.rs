//! Shared helpers for integration tests.

#![allow(dead_code)]

use std::sync::Mutex;

use vigil_core::backend::{
    AnswerRequest, BackendError, ModelBackend, QueryParseRequest, SceneGraphRequest, TriggerRequest,
};
use vigil_core::embedding::TokenEmbeddingMatrix;

/// Which capability a captured prompt belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Capability {
    SceneGraph,
    QueryParse,
    Trigger,
    Answer,
}

#[derive(Debug, Clone)]
pub struct CapturedPrompt {
    pub capability: Capability,
    pub prompt: String,
    pub frame_count: usize,
}

/// Wraps any backend and records every constructed prompt.
pub struct CapturingBackend<B> {
    inner: B,
    log: Mutex<Vec<CapturedPrompt>>,
}

impl<B> CapturingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<CapturedPrompt> {
        self.log.lock().unwrap().clone()
    }

    fn record(&self, capability: Capability, prompt: &str, frame_count: usize) {
        self.log.lock().unwrap().push(CapturedPrompt {
            capability,
            prompt: prompt.to_string(),
            frame_count,
        });
    }
}

impl<B: ModelBackend> ModelBackend for CapturingBackend<B> {
    fn generate_scene_graph(&self, req: &SceneGraphRequest<'_>) -> Result<String, BackendError> {
        self.record(Capability::SceneGraph, &req.prompt, req.frames.len());
        self.inner.generate_scene_graph(req)
    }

    fn parse_query(&self, req: &QueryParseRequest<'_>) -> Result<String, BackendError> {
        self.record(Capability::QueryParse, &req.prompt, 0);
        self.inner.parse_query(req)
    }

    fn trigger_decision(&self, req: &TriggerRequest<'_>) -> Result<String, BackendError> {
        self.record(Capability::Trigger, &req.prompt, req.frames.len());
        self.inner.trigger_decision(req)
    }

    fn generate_answer(&self, req: &AnswerRequest<'_>) -> Result<String, BackendError> {
        self.record(Capability::Answer, &req.prompt, req.frames.len());
        self.inner.generate_answer(req)
    }

    fn embed_text(&self, text: &str) -> Result<TokenEmbeddingMatrix, BackendError> {
        self.inner.embed_text(text)
    }
}

/// Test-local cosine similarity: independent of the library routine it
/// checks. Returns `None` for a zero-norm side.
pub fn naive_cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na.sqrt() * nb.sqrt()))
    }
}

/// Brute-force retrieval oracle: rank every entry by (similarity
/// descending, seq_id descending) with zero-norm entries last, then take
/// the first k. Returns (seq_id, similarity) pairs.
pub fn brute_force_top_k(
    entries: &[(u64, Vec<f64>)],
    query: &[f64],
    k: usize,
) -> Vec<(u64, Option<f64>)> {
    let query_is_zero = query.iter().all(|&x| x == 0.0);
    let mut scored: Vec<(u64, Option<f64>)> = entries
        .iter()
        .map(|(seq, v)| {
            let sim = if query_is_zero {
                None
            } else {
                naive_cosine(v, query)
            };
            (*seq, sim)
        })
        .collect();
    scored.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(b.0.cmp(&a.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => b.0.cmp(&a.0),
    });
    scored.truncate(k);
    scored
}
