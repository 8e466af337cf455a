//! The per-session streaming state machine.
//!
//! A [`StreamSession`] ingests sampled frames in index order. Every
//! `clip_window_frames` frames form a non-overlapping clip: the backend
//! generates a scene graph for it (query-guided once a query is active),
//! the graph is linearized, embedded, and appended to the memory bank with
//! its timestamp at the clip midpoint. Graphs accumulate from stream start,
//! so evidence observed before the query arrives stays retrievable.
//!
//! A query moves the session from `idle` to `awaiting_evidence`. From then
//! on the caller runs one [`StreamSession::step_decision`] per sampled
//! frame: top-K retrieval against the query embedding, context assembly
//! with timestamp-prefixed graph lines, and a silence-or-respond trigger
//! call. The first respond decision fixes `t_res`, generates the answer
//! from the same retrieved context, and moves the session to `responded`;
//! legal transitions are `idle -> awaiting_evidence -> responded`, plus the
//! direct `idle -> responded` taken by [`StreamSession::run_reactive`].
//!
//! Backend failures never stall the stream: generation and parse failures
//! skip the window, trigger failures degrade to silence, and every
//! degradation is recorded as a session warning.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::prompts::{
    build_answer_prompt, build_query_parse_prompt, build_sgg_prompt, build_trigger_prompt,
    guidance_injection,
};
use crate::backend::{
    AnswerRequest, BackendError, ClipDescriptor, ClipError, DecisionToken, GuidanceMode,
    ModelBackend, PromptBundle, PromptError, QueryParseRequest, RetryPolicy, SceneGraphRequest,
    TriggerRequest,
};
use crate::embedding::{mean_pool, GraphEmbedding};
use crate::memory::{retrieve_top_k, MemoryBank, MemoryError, RetrievalHit};
use crate::scene_graph::{
    format_timestamp_token, linearize_graph, parse_condition_graph, parse_graph_from_model_output,
    ClipSpan, EmbedMode, QueryConditionGraph, SceneGraph, SceneGraphError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("expected frame index {expected}, got {got}")]
    OutOfOrderFrame { expected: u64, got: u64 },
    #[error("a query is already active on this session")]
    QueryAlreadyActive,
    #[error("session has already responded")]
    SessionResponded,
    #[error("no query is active on this session")]
    NoActiveQuery,
    #[error("query time {got} does not match the session clock {session_t}")]
    QueryTimeMismatch { session_t: f64, got: f64 },
    #[error("a decision was already taken for frame {frame}")]
    DecisionAlreadyTaken { frame: u64 },
    #[error("latency must be positive, got {0} ms")]
    NonPositiveLatency(f64),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Clip(#[from] ClipError),
    #[error(transparent)]
    SceneGraph(#[from] SceneGraphError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// How sampled-frame times relate to the source video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    Fixed { fps: f64 },
    Streamingbench,
}

impl SamplingPolicy {
    pub fn rate_for(&self, total_frames: u64) -> f64 {
        match self {
            Self::Fixed { fps } => *fps,
            Self::Streamingbench => streamingbench_rate(total_frames),
        }
    }
}

/// The tiered sampling protocol: under 300 frames at 1 FPS, 300 to 600 at
/// 0.5 FPS, above 600 at 0.2 FPS.
pub fn streamingbench_rate(total_frames: u64) -> f64 {
    if total_frames < 300 {
        1.0
    } else if total_frames <= 600 {
        0.5
    } else {
        0.2
    }
}

/// Per-stage latency constants for simulated runs, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub sgg_ms: f64,
    pub retrieval_ms: f64,
    pub trigger_ms: f64,
}

impl LatencyProfile {
    /// Named presets: "embedding" (448/21/356) and "kv-cache" (249/20/204).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "embedding" => Some(Self {
                sgg_ms: 448.0,
                retrieval_ms: 21.0,
                trigger_ms: 356.0,
            }),
            "kv-cache" => Some(Self {
                sgg_ms: 249.0,
                retrieval_ms: 20.0,
                trigger_ms: 204.0,
            }),
            _ => None,
        }
    }
}

/// A latency profile in config form: a preset name or explicit constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatencySpec {
    Named(String),
    Explicit(LatencyProfile),
}

impl LatencySpec {
    pub fn resolve(&self) -> Result<LatencyProfile, PipelineError> {
        match self {
            Self::Named(name) => LatencyProfile::preset(name).ok_or_else(|| {
                PipelineError::InvalidConfig(format!("unknown latency preset {name:?}"))
            }),
            Self::Explicit(profile) => Ok(*profile),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Clip window size W: a scene graph is generated every W frames.
    pub clip_window_frames: u32,
    /// K for top-K retrieval.
    pub top_k: usize,
    pub guidance_mode: GuidanceMode,
    pub embed_mode: EmbedMode,
    pub sampling_policy: SamplingPolicy,
    /// Optional cap on frame references placed in context (most recent kept).
    pub max_context_frames: Option<usize>,
    /// Optional memory bank cap with oldest-first eviction; off by default.
    pub memory_cap: Option<usize>,
    /// Simulate per-stage latencies instead of measuring.
    pub latency_profile: Option<LatencySpec>,
    /// Measure wall-clock stage latencies. Off by default so replays stay
    /// byte-deterministic; ignored when a latency profile is set.
    pub measure_latency: bool,
    pub retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            clip_window_frames: 4,
            top_k: 3,
            guidance_mode: GuidanceMode::Query,
            embed_mode: EmbedMode::GraphText,
            sampling_policy: SamplingPolicy::Fixed { fps: 1.0 },
            max_context_frames: None,
            memory_cap: None,
            latency_profile: None,
            measure_latency: false,
            retries: 2,
            retry_backoff_ms: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.clip_window_frames < 1 {
            return Err(PipelineError::InvalidConfig(
                "clip_window_frames must be >= 1".into(),
            ));
        }
        if self.top_k < 1 {
            return Err(PipelineError::InvalidConfig("top_k must be >= 1".into()));
        }
        if let SamplingPolicy::Fixed { fps } = self.sampling_policy {
            if !(fps.is_finite() && fps > 0.0) {
                return Err(PipelineError::InvalidConfig(
                    "fixed sampling fps must be positive".into(),
                ));
            }
        }
        if self.memory_cap == Some(0) {
            return Err(PipelineError::InvalidConfig(
                "memory_cap must be >= 1".into(),
            ));
        }
        if let Some(spec) = &self.latency_profile {
            spec.resolve()?;
        }
        Ok(())
    }
}

/// Maximum sampling rate supported by a per-frame latency: `1s / total`,
/// rounded to one decimal.
pub fn compute_max_fps(total_latency_ms: f64) -> Result<f64, PipelineError> {
    if !(total_latency_ms.is_finite() && total_latency_ms > 0.0) {
        return Err(PipelineError::NonPositiveLatency(total_latency_ms));
    }
    Ok((1000.0 / total_latency_ms * 10.0).round() / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageLatencies {
    pub sgg_ms: f64,
    pub retrieval_ms: f64,
    pub trigger_ms: f64,
    pub total_ms: f64,
}

/// What a decision saw: one line per retrieved graph, in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSummary {
    pub seq_id: u64,
    pub timestamp_s: f64,
    pub similarity: Option<f64>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: f64,
    pub decision: DecisionToken,
    pub retrieved: Vec<RetrievedSummary>,
    pub latencies_ms: StageLatencies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    UnparseableDecision,
    BackendFailure,
    ParseFallback,
    WindowSkipped,
    RetrievalFailed,
    EmbeddingFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionWarning {
    pub t: f64,
    pub kind: WarningKind,
    pub message: String,
}

#[derive(Debug, Clone)]
enum QueryState {
    Idle,
    AwaitingEvidence {
        t_ask: f64,
        condition: QueryConditionGraph,
        query_embedding: Option<GraphEmbedding>,
    },
    Responded {
        t_ask: Option<f64>,
        t_res: f64,
        answer: String,
    },
}

/// Read-only view of the session state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryStateView {
    Idle,
    AwaitingEvidence { t_ask: f64 },
    Responded { t_res: f64 },
}

#[derive(Debug, Clone, Copy)]
enum LatencyMode {
    Zero,
    Simulated(LatencyProfile),
    Measured,
}

/// The context assembled for a trigger or answer call: frame references
/// (oldest first, optionally capped), the timestamped evidence block in
/// chronological order, and per-hit summaries in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledContext {
    pub frames: Vec<String>,
    pub block: String,
    pub timestamps: String,
    pub summaries: Vec<RetrievedSummary>,
}

pub struct StreamSession {
    session_id: String,
    config: PipelineConfig,
    fps: f64,
    backend: Arc<dyn ModelBackend>,
    bundle: PromptBundle,
    retry: RetryPolicy,
    latency_mode: LatencyMode,
    frames: Vec<String>,
    memory: MemoryBank,
    query_state: QueryState,
    decision_log: Vec<DecisionRecord>,
    warnings: Vec<SessionWarning>,
    decisions_made: u64,
    last_decision_at: Option<usize>,
    pending_sgg_ms: f64,
}

impl StreamSession {
    pub fn new(
        session_id: impl Into<String>,
        config: PipelineConfig,
        fps: f64,
        backend: Arc<dyn ModelBackend>,
        bundle: PromptBundle,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        bundle.validate()?;
        if !(fps.is_finite() && fps > 0.0) {
            return Err(PipelineError::InvalidConfig(
                "sampling rate must be positive".into(),
            ));
        }
        let latency_mode = match (&config.latency_profile, config.measure_latency) {
            (Some(spec), _) => LatencyMode::Simulated(spec.resolve()?),
            (None, true) => LatencyMode::Measured,
            (None, false) => LatencyMode::Zero,
        };
        let memory = match config.memory_cap {
            Some(cap) => MemoryBank::with_max_entries(cap),
            None => MemoryBank::new(),
        };
        let retry = RetryPolicy {
            retries: config.retries,
            backoff_ms: config.retry_backoff_ms,
        };
        Ok(Self {
            session_id: session_id.into(),
            config,
            fps,
            backend,
            bundle,
            retry,
            latency_mode,
            frames: Vec::new(),
            memory,
            query_state: QueryState::Idle,
            decision_log: Vec::new(),
            warnings: Vec::new(),
            decisions_made: 0,
            last_decision_at: None,
            pending_sgg_ms: 0.0,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Time of the most recent sampled frame: `frame_index / fps`, or 0
    /// before any frame arrives.
    pub fn current_t(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            (self.frames.len() - 1) as f64 / self.fps
        }
    }

    pub fn frames_ingested(&self) -> usize {
        self.frames.len()
    }

    pub fn memory(&self) -> &MemoryBank {
        &self.memory
    }

    pub fn decision_log(&self) -> &[DecisionRecord] {
        &self.decision_log
    }

    pub fn warnings(&self) -> &[SessionWarning] {
        &self.warnings
    }

    pub fn state(&self) -> QueryStateView {
        match &self.query_state {
            QueryState::Idle => QueryStateView::Idle,
            QueryState::AwaitingEvidence { t_ask, .. } => {
                QueryStateView::AwaitingEvidence { t_ask: *t_ask }
            }
            QueryState::Responded { t_res, .. } => QueryStateView::Responded { t_res: *t_res },
        }
    }

    pub fn t_ask(&self) -> Option<f64> {
        match &self.query_state {
            QueryState::Idle => None,
            QueryState::AwaitingEvidence { t_ask, .. } => Some(*t_ask),
            QueryState::Responded { t_ask, .. } => *t_ask,
        }
    }

    pub fn t_res(&self) -> Option<f64> {
        match &self.query_state {
            QueryState::Responded { t_res, .. } => Some(*t_res),
            _ => None,
        }
    }

    pub fn answer(&self) -> Option<&str> {
        match &self.query_state {
            QueryState::Responded { answer, .. } => Some(answer),
            _ => None,
        }
    }

    fn warn(&mut self, t: f64, kind: WarningKind, message: String) {
        self.warnings.push(SessionWarning { t, kind, message });
    }

    /// Ingest the next sampled frame. When it completes a W-frame window,
    /// runs scene-graph generation for the clip and appends the parsed,
    /// embedded graph to memory, returning it; otherwise returns `None`.
    /// Generation, parse and embedding failures skip the window with a
    /// warning and the stream continues.
    pub fn ingest_frame(
        &mut self,
        index: u64,
        frame_ref: &str,
    ) -> Result<Option<SceneGraph>, PipelineError> {
        let expected = self.frames.len() as u64;
        if index != expected {
            return Err(PipelineError::OutOfOrderFrame {
                expected,
                got: index,
            });
        }
        self.frames.push(frame_ref.to_string());
        // Latency accounting is per frame: generation cost from an earlier
        // frame that took no decision must not leak into this one.
        self.pending_sgg_ms = 0.0;
        let w = self.config.clip_window_frames as usize;
        if !self.frames.len().is_multiple_of(w) {
            return Ok(None);
        }
        let started = Instant::now();
        let produced = self.process_window(index + 1 - w as u64, index)?;
        match self.latency_mode {
            LatencyMode::Simulated(profile) => self.pending_sgg_ms = profile.sgg_ms,
            LatencyMode::Measured => {
                self.pending_sgg_ms = started.elapsed().as_secs_f64() * 1000.0;
            }
            LatencyMode::Zero => {}
        }
        Ok(produced)
    }

    fn process_window(
        &mut self,
        start: u64,
        end: u64,
    ) -> Result<Option<SceneGraph>, PipelineError> {
        let start_s = start as f64 / self.fps;
        let end_s = end as f64 / self.fps;
        let center_s = (start_s + end_s) / 2.0;
        let clip = ClipDescriptor::new((start..=end).collect(), start_s, end_s, center_s)?;
        let clip_frames: Vec<String> = self.frames[start as usize..=end as usize].to_vec();

        // Query guidance is injected only while a query is awaiting
        // evidence; object guidance without a parsed condition graph
        // degrades to no guidance.
        let injection = match &self.query_state {
            QueryState::AwaitingEvidence { condition, .. }
                if self.config.guidance_mode != GuidanceMode::None =>
            {
                match guidance_injection(
                    self.config.guidance_mode,
                    &condition.original_query,
                    Some(&condition.graph),
                ) {
                    Ok(text) => text,
                    Err(PromptError::MissingConditionGraph) => "None".to_string(),
                    Err(other) => return Err(other.into()),
                }
            }
            _ => "None".to_string(),
        };
        let prompt = build_sgg_prompt(&self.bundle, &injection);

        let backend = Arc::clone(&self.backend);
        let request = SceneGraphRequest {
            clip: &clip,
            frames: &clip_frames,
            prompt,
        };
        let raw = match self.retry.run(|| backend.generate_scene_graph(&request)) {
            Ok(raw) => raw,
            Err(err) => {
                self.warn(
                    end_s,
                    WarningKind::WindowSkipped,
                    format!("scene graph generation failed for clip [{start}, {end}]: {err}"),
                );
                return Ok(None);
            }
        };
        let parsed =
            match parse_graph_from_model_output(&raw, center_s, Some(ClipSpan::new(start, end)?)) {
                Ok(parsed) => parsed,
                Err(err) => {
                    self.warn(
                        end_s,
                        WarningKind::WindowSkipped,
                        format!("scene graph parse failed for clip [{start}, {end}]: {err}"),
                    );
                    return Ok(None);
                }
            };
        let phrase = linearize_graph(&parsed.graph)?;
        let embedding = match self
            .retry
            .run(|| backend.embed_text(&phrase))
            .map(|m| mean_pool(&m))
        {
            Ok(embedding) => embedding,
            Err(err) => {
                self.warn(
                    end_s,
                    WarningKind::EmbeddingFailed,
                    format!("graph embedding failed for clip [{start}, {end}]: {err}"),
                );
                return Ok(None);
            }
        };
        match self.memory.append(parsed.graph.clone(), embedding) {
            Ok(_) => Ok(Some(parsed.graph)),
            Err(err) => {
                self.warn(
                    end_s,
                    WarningKind::WindowSkipped,
                    format!("memory append failed for clip [{start}, {end}]: {err}"),
                );
                Ok(None)
            }
        }
    }

    /// Submit the query at the current stream time. Parses it into a
    /// condition graph (falling back to the raw text on failure) and
    /// computes the retrieval embedding per the configured embed mode.
    pub fn submit_query(&mut self, query: &str, t_ask: f64) -> Result<(), PipelineError> {
        match self.query_state {
            QueryState::Idle => {}
            QueryState::AwaitingEvidence { .. } => return Err(PipelineError::QueryAlreadyActive),
            QueryState::Responded { .. } => return Err(PipelineError::SessionResponded),
        }
        let session_t = self.current_t();
        if (t_ask - session_t).abs() > 1e-9 {
            return Err(PipelineError::QueryTimeMismatch {
                session_t,
                got: t_ask,
            });
        }
        let (condition, query_embedding) = self.prepare_query(query, t_ask)?;
        self.query_state = QueryState::AwaitingEvidence {
            t_ask,
            condition,
            query_embedding,
        };
        Ok(())
    }

    fn prepare_query(
        &mut self,
        query: &str,
        t_ask: f64,
    ) -> Result<(QueryConditionGraph, Option<GraphEmbedding>), PipelineError> {
        let prompt = build_query_parse_prompt(&self.bundle, query);
        let backend = Arc::clone(&self.backend);
        let request = QueryParseRequest { query, prompt };
        let condition = match self.retry.run(|| backend.parse_query(&request)) {
            Ok(text) => match parse_condition_graph(&text, t_ask) {
                Ok(parsed) => {
                    QueryConditionGraph::parsed(parsed.graph, query, self.config.embed_mode)?
                }
                Err(err) => {
                    self.warn(
                        t_ask,
                        WarningKind::ParseFallback,
                        format!("query parse yielded no condition graph: {err}"),
                    );
                    QueryConditionGraph::fallback(query, self.config.embed_mode, t_ask)?
                }
            },
            Err(err) => {
                self.warn(
                    t_ask,
                    WarningKind::ParseFallback,
                    format!("query parse backend failed: {err}"),
                );
                QueryConditionGraph::fallback(query, self.config.embed_mode, t_ask)?
            }
        };
        let source_text = condition.embed_source_text();
        let query_embedding = match self
            .retry
            .run(|| backend.embed_text(&source_text))
            .map(|m| mean_pool(&m))
        {
            Ok(embedding) => Some(embedding),
            Err(err) => {
                self.warn(
                    t_ask,
                    WarningKind::EmbeddingFailed,
                    format!("query embedding failed: {err}"),
                );
                None
            }
        };
        Ok((condition, query_embedding))
    }

    /// Assemble the ordered context for a trigger or answer call: frame
    /// references (most recent kept under the optional cap), then one
    /// timestamp-prefixed line per retrieved graph in ascending timestamp
    /// order.
    pub fn assemble_context(&self, hits: &[RetrievalHit]) -> AssembledContext {
        let summaries: Vec<RetrievedSummary> = hits
            .iter()
            .map(|hit| {
                let text = self
                    .memory
                    .entry_by_seq(hit.seq_id)
                    .and_then(|entry| linearize_graph(&entry.graph).ok())
                    .unwrap_or_default();
                RetrievedSummary {
                    seq_id: hit.seq_id,
                    timestamp_s: hit.timestamp_s,
                    similarity: hit.similarity,
                    text,
                }
            })
            .collect();

        let mut chronological: Vec<&RetrievedSummary> = summaries.iter().collect();
        chronological.sort_by(|a, b| {
            a.timestamp_s
                .total_cmp(&b.timestamp_s)
                .then(a.seq_id.cmp(&b.seq_id))
        });
        let lines: Vec<String> = chronological
            .iter()
            .map(|s| {
                let token = format_timestamp_token(s.timestamp_s).unwrap_or_default();
                format!("{token} {}", s.text)
            })
            .collect();
        let timestamps = chronological
            .iter()
            .map(|s| format_timestamp_token(s.timestamp_s).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(" ");

        let frames = match self.config.max_context_frames {
            Some(cap) => {
                let skip = self.frames.len().saturating_sub(cap);
                self.frames[skip..].to_vec()
            }
            None => self.frames.clone(),
        };
        AssembledContext {
            frames,
            block: lines.join("\n"),
            timestamps,
            summaries,
        }
    }

    /// One silence-or-respond decision at the current stream time. On
    /// respond: fixes `t_res`, generates the answer from the same retrieved
    /// context, and moves to `responded`. All backend failures degrade to
    /// silence so the stream never stalls.
    pub fn step_decision(&mut self) -> Result<DecisionRecord, PipelineError> {
        let (t_ask, query, query_embedding) = match &self.query_state {
            QueryState::AwaitingEvidence {
                t_ask,
                condition,
                query_embedding,
            } => (
                *t_ask,
                condition.original_query.clone(),
                query_embedding.clone(),
            ),
            QueryState::Responded { .. } => return Err(PipelineError::SessionResponded),
            QueryState::Idle => return Err(PipelineError::NoActiveQuery),
        };
        if self.last_decision_at == Some(self.frames.len()) {
            return Err(PipelineError::DecisionAlreadyTaken {
                frame: self.frames.len().saturating_sub(1) as u64,
            });
        }
        let t = self.current_t();
        debug_assert!(t + 1e-9 >= t_ask, "decisions never precede the query");

        let step_started = Instant::now();
        let retrieval_started = Instant::now();
        let hits: Vec<RetrievalHit> = match &query_embedding {
            Some(embedding) if !self.memory.is_empty() => {
                match retrieve_top_k(&self.memory, embedding, self.config.top_k) {
                    Ok(result) => result.hits,
                    Err(err) => {
                        self.warn(t, WarningKind::RetrievalFailed, err.to_string());
                        Vec::new()
                    }
                }
            }
            _ => Vec::new(),
        };
        let retrieval_ms = match self.latency_mode {
            LatencyMode::Simulated(profile) => profile.retrieval_ms,
            LatencyMode::Measured => retrieval_started.elapsed().as_secs_f64() * 1000.0,
            LatencyMode::Zero => 0.0,
        };

        let context = self.assemble_context(&hits);
        let trigger_prompt =
            build_trigger_prompt(&self.bundle, &context.block, &context.timestamps, &query);
        let backend = Arc::clone(&self.backend);
        let trigger_request = TriggerRequest {
            step_index: self.decisions_made,
            frames: &context.frames,
            prompt: trigger_prompt,
        };
        let trigger_started = Instant::now();
        let reply = self
            .retry
            .run(|| backend.trigger_decision(&trigger_request));
        let trigger_ms = match self.latency_mode {
            LatencyMode::Simulated(profile) => profile.trigger_ms,
            LatencyMode::Measured => trigger_started.elapsed().as_secs_f64() * 1000.0,
            LatencyMode::Zero => 0.0,
        };
        let step_elapsed_ms = step_started.elapsed().as_secs_f64() * 1000.0;

        let mut decision = match reply {
            Ok(raw) => {
                let parsed = super::backend::parse_decision_reply(&raw);
                if parsed.unparseable {
                    self.warn(
                        t,
                        WarningKind::UnparseableDecision,
                        format!("trigger reply not yes/no: {raw:?}"),
                    );
                }
                parsed.token
            }
            Err(err) => {
                self.warn(
                    t,
                    WarningKind::BackendFailure,
                    format!("trigger decision failed: {err}"),
                );
                DecisionToken::Silence
            }
        };

        if decision == DecisionToken::Respond {
            let answer_prompt =
                build_answer_prompt(&self.bundle, &context.block, &context.timestamps, &query);
            let answer_request = AnswerRequest {
                frames: &context.frames,
                prompt: answer_prompt,
            };
            match self.retry.run(|| backend.generate_answer(&answer_request)) {
                Ok(answer) => {
                    self.query_state = QueryState::Responded {
                        t_ask: Some(t_ask),
                        t_res: t,
                        answer,
                    };
                }
                Err(err) => {
                    self.warn(
                        t,
                        WarningKind::BackendFailure,
                        format!("answer generation failed, staying silent: {err}"),
                    );
                    decision = DecisionToken::Silence;
                }
            }
        }

        let sgg_ms = std::mem::take(&mut self.pending_sgg_ms);
        let total_ms = match self.latency_mode {
            LatencyMode::Simulated(_) => sgg_ms + retrieval_ms + trigger_ms,
            LatencyMode::Measured => sgg_ms + step_elapsed_ms,
            LatencyMode::Zero => 0.0,
        };
        let record = DecisionRecord {
            t,
            decision,
            retrieved: context.summaries,
            latencies_ms: StageLatencies {
                sgg_ms,
                retrieval_ms,
                trigger_ms,
                total_ms,
            },
        };
        self.decision_log.push(record.clone());
        self.decisions_made += 1;
        self.last_decision_at = Some(self.frames.len());
        Ok(record)
    }

    /// Reactive interaction: answer immediately at query time using the
    /// same parse/embed/retrieve/assemble path as the response phase. The
    /// session moves directly from `idle` to `responded`.
    pub fn run_reactive(&mut self, query: &str, t_ask: f64) -> Result<String, PipelineError> {
        match self.query_state {
            QueryState::Idle => {}
            QueryState::AwaitingEvidence { .. } => return Err(PipelineError::QueryAlreadyActive),
            QueryState::Responded { .. } => return Err(PipelineError::SessionResponded),
        }
        let session_t = self.current_t();
        if (t_ask - session_t).abs() > 1e-9 {
            return Err(PipelineError::QueryTimeMismatch {
                session_t,
                got: t_ask,
            });
        }
        let (_condition, query_embedding) = self.prepare_query(query, t_ask)?;
        let hits: Vec<RetrievalHit> = match &query_embedding {
            Some(embedding) if !self.memory.is_empty() => {
                match retrieve_top_k(&self.memory, embedding, self.config.top_k) {
                    Ok(result) => result.hits,
                    Err(err) => {
                        self.warn(t_ask, WarningKind::RetrievalFailed, err.to_string());
                        Vec::new()
                    }
                }
            }
            _ => Vec::new(),
        };
        let context = self.assemble_context(&hits);
        let answer_prompt =
            build_answer_prompt(&self.bundle, &context.block, &context.timestamps, query);
        let backend = Arc::clone(&self.backend);
        let request = AnswerRequest {
            frames: &context.frames,
            prompt: answer_prompt,
        };
        let answer = self.retry.run(|| backend.generate_answer(&request))?;
        self.query_state = QueryState::Responded {
            t_ask: Some(t_ask),
            t_res: t_ask,
            answer: answer.clone(),
        };
        Ok(answer)
    }
}
