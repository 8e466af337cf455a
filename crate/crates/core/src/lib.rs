//! Vigil: a streaming scene-graph memory and proactive trigger engine.
//!
//! Vigil watches a sampled video stream clip by clip, abstracts each clip
//! into a scene graph of `[subject, predicate, object]` triplets, and keeps
//! every graph in a timestamped memory bank. When a user query arrives, the
//! query is parsed into a condition graph of the evidence it anticipates;
//! from then on, every sampled frame triggers a retrieval of the most
//! query-relevant graphs and a silence-or-respond decision by the model
//! backend. The answer is generated the moment the decision flips to
//! respond, grounded in the retrieved, timestamp-prefixed evidence.
//!
//! The crate is organised around five pieces:
//!
//! - [`scene_graph`]: triplet/graph domain types, deterministic
//!   linearization, timestamp tokens, and the bracket-line output grammar.
//! - [`embedding`] and [`memory`]: mean-pooled text embeddings, cosine
//!   similarity, the deterministic hashing embedder, and the append-only
//!   memory bank with top-K retrieval.
//! - [`backend`]: the pluggable model abstraction (scene-graph generation,
//!   query parsing, trigger decision, answer generation, text embedding)
//!   with a trace-driven scripted backend and a remote chat-completions
//!   backend.
//! - [`pipeline`]: the per-session state machine — frame ingestion, clip
//!   windowing, memory updates, per-frame trigger decisions, response and
//!   reactive modes, latency accounting.
//! - [`harness`]: replayable JSONL traces, scenario runner, ablation
//!   sweeps, report emission, and a synthetic trace generator.
//!
//! Everything in the replay path is deterministic: identical traces and
//! configs produce byte-identical reports.

#![forbid(unsafe_code)]

pub mod backend;
pub mod embedding;
pub mod harness;
pub mod memory;
pub mod pipeline;
pub mod rng;
pub mod scene_graph;

pub use backend::{BackendError, DecisionToken, GuidanceMode, ModelBackend, PromptBundle};
pub use embedding::{
    cosine_similarity, mean_pool, EmbeddingError, GraphEmbedding, HashingEmbedder,
    TokenEmbeddingMatrix,
};
pub use memory::{retrieve_top_k, MemoryBank, MemoryError, RetrievalHit, RetrievalResult};
pub use pipeline::{
    compute_max_fps, streamingbench_rate, PipelineConfig, PipelineError, SamplingPolicy,
    StreamSession,
};
pub use scene_graph::{
    format_timestamp_token, linearize_graph, linearize_triplet, parse_graph_from_model_output,
    EmbedMode, GraphSource, SceneGraph, SceneGraphError, Triplet,
};
