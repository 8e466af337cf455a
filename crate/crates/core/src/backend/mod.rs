//! The pluggable model backend.
//!
//! Five capabilities sit behind one trait: scene-graph generation, query
//! parsing, trigger decision, answer generation, and text embedding. The
//! [`scripted::ScriptedBackend`] replays outputs from a trace for
//! deterministic desk-scale runs; the [`remote::RemoteBackend`] speaks a
//! chat-completions wire format. Each request carries the fully constructed
//! prompt, so a request is determined by its prompt text plus a semantic
//! key (clip span for generation, step index for decisions) used by
//! scripted playback.

pub mod prompts;
pub mod remote;
pub mod scripted;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, TokenEmbeddingMatrix};

pub use prompts::{GuidanceMode, PromptBundle, PromptError};
pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::ScriptedBackend;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timeout: {0}")]
    Timeout(String),
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

impl BackendError {
    /// Transient failures worth retrying; malformed responses are not.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Unavailable(_) | Self::Timeout(_))
    }
}

/// The per-frame silence-or-respond action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionToken {
    Respond,
    Silence,
}

/// A decision parsed out of a raw trigger reply. `unparseable` marks
/// replies whose first alphabetic token matched neither yes nor no; those
/// degrade to silence with a warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedDecision {
    pub token: DecisionToken,
    pub unparseable: bool,
}

/// Interpret a trigger reply: the first alphabetic token, matched
/// case-insensitively by prefix — "yes" means respond, "no" means silence,
/// anything else is silence with the unparseable flag set.
pub fn parse_decision_reply(reply: &str) -> ParsedDecision {
    let first_word: String = reply
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if first_word.starts_with("yes") {
        ParsedDecision {
            token: DecisionToken::Respond,
            unparseable: false,
        }
    } else if first_word.starts_with("no") {
        ParsedDecision {
            token: DecisionToken::Silence,
            unparseable: false,
        }
    } else {
        ParsedDecision {
            token: DecisionToken::Silence,
            unparseable: true,
        }
    }
}

/// The clip a scene graph is generated from: its sampled frame indices and
/// the seconds they span, with the graph timestamp at the center.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipDescriptor {
    frame_ids: Vec<u64>,
    start_s: f64,
    end_s: f64,
    center_s: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClipError {
    #[error("clip must contain at least one frame")]
    Empty,
    #[error("clip frame ids must be strictly increasing")]
    NotIncreasing,
    #[error("clip times must satisfy start <= center <= end")]
    BadTimes,
}

impl ClipDescriptor {
    pub fn new(
        frame_ids: Vec<u64>,
        start_s: f64,
        end_s: f64,
        center_s: f64,
    ) -> Result<Self, ClipError> {
        if frame_ids.is_empty() {
            return Err(ClipError::Empty);
        }
        if frame_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ClipError::NotIncreasing);
        }
        if !(start_s <= center_s && center_s <= end_s) {
            return Err(ClipError::BadTimes);
        }
        Ok(Self {
            frame_ids,
            start_s,
            end_s,
            center_s,
        })
    }

    pub fn frame_ids(&self) -> &[u64] {
        &self.frame_ids
    }

    pub fn span(&self) -> (u64, u64) {
        (self.frame_ids[0], *self.frame_ids.last().unwrap())
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn end_s(&self) -> f64 {
        self.end_s
    }

    pub fn center_s(&self) -> f64 {
        self.center_s
    }
}

#[derive(Debug, Clone)]
pub struct SceneGraphRequest<'a> {
    pub clip: &'a ClipDescriptor,
    /// Frame references of the clip, in frame order.
    pub frames: &'a [String],
    pub prompt: String,
}

#[derive(Debug, Clone)]
pub struct QueryParseRequest<'a> {
    pub query: &'a str,
    pub prompt: String,
}

#[derive(Debug, Clone)]
pub struct TriggerRequest<'a> {
    /// 0-based index of this decision within the session; the scripted
    /// backend keys its replies on it.
    pub step_index: u64,
    pub frames: &'a [String],
    pub prompt: String,
}

#[derive(Debug, Clone)]
pub struct AnswerRequest<'a> {
    pub frames: &'a [String],
    pub prompt: String,
}

/// Uniform abstraction over the five model capabilities. Implementations
/// are stateless per request and shareable across sessions.
pub trait ModelBackend: Send + Sync {
    fn generate_scene_graph(&self, req: &SceneGraphRequest<'_>) -> Result<String, BackendError>;
    fn parse_query(&self, req: &QueryParseRequest<'_>) -> Result<String, BackendError>;
    fn trigger_decision(&self, req: &TriggerRequest<'_>) -> Result<String, BackendError>;
    fn generate_answer(&self, req: &AnswerRequest<'_>) -> Result<String, BackendError>;
    fn embed_text(&self, text: &str) -> Result<TokenEmbeddingMatrix, BackendError>;
}

/// Fixed-backoff retry: one initial attempt plus at most `retries` more on
/// transient errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            backoff_ms: 0,
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let mut attempts_left = self.retries;
        loop {
            match call() {
                Ok(value) => return Ok(value),
                Err(err) if err.is_transient() && attempts_left > 0 => {
                    attempts_left -= 1;
                    if self.backoff_ms > 0 {
                        std::thread::sleep(Duration::from_millis(self.backoff_ms));
                    }
                }
                Err(err) => return Err(err),
            }
        }
    }
}
