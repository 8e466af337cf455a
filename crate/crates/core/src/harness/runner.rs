//! Scenario replay and scoring.
//!
//! [`run_scenario`] binds a scripted backend to a trace, replays its frames
//! through a [`StreamSession`], submits the query at the first sampled
//! frame at or after its `t_ask`, runs one trigger decision per frame while
//! awaiting, and scores response timing against the ground-truth window:
//! in-window when `t_lo <= t_res <= t_hi`, premature when `t_res < t_lo`,
//! missed when the stream ends without a response (a response after `t_hi`
//! also counts as missed so the three verdicts partition every session).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::PromptBundle;
use crate::pipeline::{
    DecisionRecord, PipelineConfig, QueryStateView, SessionWarning, StreamSession,
};

use super::{HarnessError, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingVerdict {
    InWindow,
    Premature,
    Missed,
}

impl std::fmt::Display for TimingVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::InWindow => write!(f, "in_window"),
            Self::Premature => write!(f, "premature"),
            Self::Missed => write!(f, "missed"),
        }
    }
}

/// Per-session latency means over the decision log, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub decisions: usize,
    pub mean_sgg_ms: f64,
    pub mean_retrieval_ms: f64,
    pub mean_trigger_ms: f64,
    pub mean_total_ms: f64,
}

impl LatencySummary {
    fn from_log(log: &[DecisionRecord]) -> Self {
        let n = log.len();
        if n == 0 {
            return Self {
                decisions: 0,
                mean_sgg_ms: 0.0,
                mean_retrieval_ms: 0.0,
                mean_trigger_ms: 0.0,
                mean_total_ms: 0.0,
            };
        }
        let count = n as f64;
        Self {
            decisions: n,
            mean_sgg_ms: log.iter().map(|r| r.latencies_ms.sgg_ms).sum::<f64>() / count,
            mean_retrieval_ms: log.iter().map(|r| r.latencies_ms.retrieval_ms).sum::<f64>() / count,
            mean_trigger_ms: log.iter().map(|r| r.latencies_ms.trigger_ms).sum::<f64>() / count,
            mean_total_ms: log.iter().map(|r| r.latencies_ms.total_ms).sum::<f64>() / count,
        }
    }
}

/// Everything one replayed session produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trace_id: String,
    pub t_ask: Option<f64>,
    pub t_res: Option<f64>,
    pub timing_verdict: Option<TimingVerdict>,
    pub answer_match: Option<bool>,
    pub answer: Option<String>,
    pub decision_log: Vec<DecisionRecord>,
    pub latency: LatencySummary,
    pub warnings: Vec<SessionWarning>,
}

/// Suite-level aggregates. Rates are over sessions that carry a ground
/// truth; the latency mean is over sessions with at least one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteAggregates {
    pub sessions: usize,
    pub with_ground_truth: usize,
    pub timing_accuracy: Option<f64>,
    pub premature_rate: Option<f64>,
    pub missed_rate: Option<f64>,
    pub mean_decision_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub sessions: Vec<RunReport>,
    pub aggregates: SuiteAggregates,
}

/// Replay one trace under `config` with its scripted backend.
pub fn run_scenario(
    trace: &Trace,
    config: &PipelineConfig,
    bundle: &PromptBundle,
) -> Result<RunReport, HarnessError> {
    let backend = Arc::new(trace.scripted_backend());
    let mut session = StreamSession::new(
        trace.trace_id.clone(),
        config.clone(),
        trace.fps(),
        backend,
        bundle.clone(),
    )?;

    let mut pending_query = trace.query.clone();
    for (index, frame_ref) in trace.frames.iter().enumerate() {
        session.ingest_frame(index as u64, frame_ref)?;
        if let Some(query) = &pending_query {
            if session.current_t() + 1e-9 >= query.t_ask {
                session.submit_query(&query.text, session.current_t())?;
                pending_query = None;
            }
        }
        if matches!(session.state(), QueryStateView::AwaitingEvidence { .. }) {
            session.step_decision()?;
        }
    }

    let t_ask = session.t_ask();
    let t_res = session.t_res();
    let answer = session.answer().map(str::to_string);
    let timing_verdict = trace.ground_truth.as_ref().map(|gt| match t_res {
        Some(t) if gt.t_lo <= t && t <= gt.t_hi => TimingVerdict::InWindow,
        Some(t) if t < gt.t_lo => TimingVerdict::Premature,
        _ => TimingVerdict::Missed,
    });
    let answer_match = trace.ground_truth.as_ref().map(|gt| {
        answer
            .as_deref()
            .map(|a| {
                a.to_lowercase()
                    .contains(&gt.expected_answer.to_lowercase())
            })
            .unwrap_or(false)
    });

    Ok(RunReport {
        trace_id: trace.trace_id.clone(),
        t_ask,
        t_res,
        timing_verdict,
        answer_match,
        answer,
        decision_log: session.decision_log().to_vec(),
        latency: LatencySummary::from_log(session.decision_log()),
        warnings: session.warnings().to_vec(),
    })
}

/// Run a whole suite; sessions are reported in trace-id order regardless of
/// input order.
pub fn run_suite(
    traces: &[Trace],
    config: &PipelineConfig,
    bundle: &PromptBundle,
) -> Result<SuiteReport, HarnessError> {
    let mut sessions: Vec<RunReport> = traces
        .iter()
        .map(|trace| run_scenario(trace, config, bundle))
        .collect::<Result<_, _>>()?;
    sessions.sort_by(|a, b| a.trace_id.cmp(&b.trace_id));
    let aggregates = aggregate(&sessions);
    Ok(SuiteReport {
        sessions,
        aggregates,
    })
}

pub(crate) fn aggregate(sessions: &[RunReport]) -> SuiteAggregates {
    let with_gt: Vec<&RunReport> = sessions
        .iter()
        .filter(|s| s.timing_verdict.is_some())
        .collect();
    let denom = with_gt.len();
    let rate = |verdict: TimingVerdict| {
        if denom == 0 {
            None
        } else {
            Some(
                with_gt
                    .iter()
                    .filter(|s| s.timing_verdict == Some(verdict))
                    .count() as f64
                    / denom as f64,
            )
        }
    };
    let with_decisions: Vec<&RunReport> = sessions
        .iter()
        .filter(|s| s.latency.decisions > 0)
        .collect();
    let mean_decision_latency_ms = if with_decisions.is_empty() {
        None
    } else {
        Some(
            with_decisions
                .iter()
                .map(|s| s.latency.mean_total_ms)
                .sum::<f64>()
                / with_decisions.len() as f64,
        )
    };
    SuiteAggregates {
        sessions: sessions.len(),
        with_ground_truth: denom,
        timing_accuracy: rate(TimingVerdict::InWindow),
        premature_rate: rate(TimingVerdict::Premature),
        missed_rate: rate(TimingVerdict::Missed),
        mean_decision_latency_ms,
    }
}
