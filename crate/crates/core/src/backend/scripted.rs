//! Trace-driven scripted backend.
//!
//! Replays pre-recorded model outputs keyed by capability: scene-graph
//! generation by clip span, trigger decisions by step index, query parsing
//! and answers by their single slots. Embeddings come from the
//! deterministic hashing embedder, so a scripted replay is a pure function
//! of the trace.

use std::collections::HashMap;

use crate::embedding::{HashingEmbedder, TokenEmbeddingMatrix};

use super::{
    AnswerRequest, BackendError, ModelBackend, QueryParseRequest, SceneGraphRequest, TriggerRequest,
};

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    sgg: HashMap<(u64, u64), String>,
    condition_graph: Option<String>,
    decisions: HashMap<u64, String>,
    answer: Option<String>,
    embedder: HashingEmbedder,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_embedder(mut self, embedder: HashingEmbedder) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn script_sgg(mut self, span: (u64, u64), output: impl Into<String>) -> Self {
        self.sgg.insert(span, output.into());
        self
    }

    pub fn script_condition_graph(mut self, output: impl Into<String>) -> Self {
        self.condition_graph = Some(output.into());
        self
    }

    pub fn script_decision(mut self, step_index: u64, reply: impl Into<String>) -> Self {
        self.decisions.insert(step_index, reply.into());
        self
    }

    pub fn script_answer(mut self, answer: impl Into<String>) -> Self {
        self.answer = Some(answer.into());
        self
    }
}

impl ModelBackend for ScriptedBackend {
    fn generate_scene_graph(&self, req: &SceneGraphRequest<'_>) -> Result<String, BackendError> {
        let span = req.clip.span();
        self.sgg.get(&span).cloned().ok_or_else(|| {
            BackendError::Unavailable(format!(
                "no scripted scene graph for clip [{}, {}]",
                span.0, span.1
            ))
        })
    }

    fn parse_query(&self, _req: &QueryParseRequest<'_>) -> Result<String, BackendError> {
        self.condition_graph
            .clone()
            .ok_or_else(|| BackendError::Unavailable("no scripted condition graph".into()))
    }

    fn trigger_decision(&self, req: &TriggerRequest<'_>) -> Result<String, BackendError> {
        self.decisions.get(&req.step_index).cloned().ok_or_else(|| {
            BackendError::Unavailable(format!("no scripted decision for step {}", req.step_index))
        })
    }

    fn generate_answer(&self, _req: &AnswerRequest<'_>) -> Result<String, BackendError> {
        self.answer
            .clone()
            .ok_or_else(|| BackendError::Unavailable("no scripted answer".into()))
    }

    fn embed_text(&self, text: &str) -> Result<TokenEmbeddingMatrix, BackendError> {
        Ok(self.embedder.embed(text)?)
    }
}
