//! Replayable traces, scenario running, ablation sweeps, and reports.
//!
//! A trace is a JSONL file — one record per line, discriminated by `kind`:
//!
//! ```text
//! {"kind":"meta","total_frames":24,"policy":{"fixed":{"fps":1.0}}}
//! {"kind":"frame","index":0,"ref":"frame-0"}
//! {"kind":"query","t_ask":8.0,"text":"...","scripted_condition_graph":"[boy, talking_with, others]"}
//! {"kind":"sgg","clip_span":[0,3],"output_text":"[woman, in, red]"}
//! {"kind":"decision","step_index":0,"reply_text":"No"}
//! {"kind":"answer","text":"..."}
//! {"kind":"ground_truth","t_lo":17.0,"t_hi":21.0,"expected_answer":"talking"}
//! ```
//!
//! The meta record must come first and appear exactly once; frame indices
//! must cover `0..n` exactly; at most one query; a ground truth requires a
//! query and `t_lo <= t_hi`. [`load_trace`] reports every violation with
//! its line number rather than stopping at the first.

pub mod gen;
pub mod report;
pub mod runner;
pub mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{PromptBundle, ScriptedBackend};
use crate::pipeline::{PipelineConfig, PipelineError, SamplingPolicy};

pub use gen::{gen_trace, GenParams};
pub use report::{emit_report, ReportFormat, ReportPayload};
pub use runner::{
    run_scenario, run_suite, LatencySummary, RunReport, SuiteAggregates, SuiteReport, TimingVerdict,
};
pub use sweep::{ablation_sweep, ConfigGrid, SweepReport, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trace failed validation with {} issue(s)", .0.len())]
    InvalidTrace(Vec<TraceIssue>),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Config(String),
}

/// One line-anchored validation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for TraceIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// One JSONL trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Meta {
        total_frames: u64,
        policy: SamplingPolicy,
    },
    Frame {
        index: u64,
        r#ref: String,
    },
    Query {
        t_ask: f64,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scripted_condition_graph: Option<String>,
    },
    Sgg {
        clip_span: (u64, u64),
        output_text: String,
    },
    Decision {
        step_index: u64,
        reply_text: String,
    },
    Answer {
        text: String,
    },
    GroundTruth {
        t_lo: f64,
        t_hi: f64,
        expected_answer: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceQuery {
    pub t_ask: f64,
    pub text: String,
    pub scripted_condition_graph: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t_lo: f64,
    pub t_hi: f64,
    pub expected_answer: String,
}

/// A validated trace, ready to replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub trace_id: String,
    pub total_frames: u64,
    pub policy: SamplingPolicy,
    /// Sampled frame references, indexed by frame index.
    pub frames: Vec<String>,
    pub query: Option<TraceQuery>,
    pub sgg: BTreeMap<(u64, u64), String>,
    pub decisions: BTreeMap<u64, String>,
    pub answer: Option<String>,
    pub ground_truth: Option<GroundTruth>,
}

impl Trace {
    /// The sampling rate this trace replays at.
    pub fn fps(&self) -> f64 {
        self.policy.rate_for(self.total_frames)
    }

    /// Time of the last sampled frame.
    pub fn end_t(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            (self.frames.len() - 1) as f64 / self.fps()
        }
    }

    /// Bind a scripted backend to this trace's recorded outputs.
    pub fn scripted_backend(&self) -> ScriptedBackend {
        let mut backend = ScriptedBackend::new();
        for (span, output) in &self.sgg {
            backend = backend.script_sgg(*span, output.clone());
        }
        for (step, reply) in &self.decisions {
            backend = backend.script_decision(*step, reply.clone());
        }
        if let Some(query) = &self.query {
            if let Some(graph) = &query.scripted_condition_graph {
                backend = backend.script_condition_graph(graph.clone());
            }
        }
        if let Some(answer) = &self.answer {
            backend = backend.script_answer(answer.clone());
        }
        backend
    }

    /// Serialize back to canonical JSONL: meta, frames, query, sgg records
    /// in span order, decisions in step order, answer, ground truth.
    pub fn to_jsonl(&self) -> String {
        let mut records: Vec<TraceRecord> = Vec::new();
        records.push(TraceRecord::Meta {
            total_frames: self.total_frames,
            policy: self.policy,
        });
        for (index, r#ref) in self.frames.iter().enumerate() {
            records.push(TraceRecord::Frame {
                index: index as u64,
                r#ref: r#ref.clone(),
            });
        }
        if let Some(query) = &self.query {
            records.push(TraceRecord::Query {
                t_ask: query.t_ask,
                text: query.text.clone(),
                scripted_condition_graph: query.scripted_condition_graph.clone(),
            });
        }
        for (span, output_text) in &self.sgg {
            records.push(TraceRecord::Sgg {
                clip_span: *span,
                output_text: output_text.clone(),
            });
        }
        for (step_index, reply_text) in &self.decisions {
            records.push(TraceRecord::Decision {
                step_index: *step_index,
                reply_text: reply_text.clone(),
            });
        }
        if let Some(text) = &self.answer {
            records.push(TraceRecord::Answer { text: text.clone() });
        }
        if let Some(gt) = &self.ground_truth {
            records.push(TraceRecord::GroundTruth {
                t_lo: gt.t_lo,
                t_hi: gt.t_hi,
                expected_answer: gt.expected_answer.clone(),
            });
        }
        let mut out = String::new();
        for record in records {
            out.push_str(&serde_json::to_string(&record).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Load and validate a trace file. All validation issues are collected and
/// returned together, each tagged with its source line where applicable.
pub fn load_trace(path: &Path) -> Result<Trace, Vec<TraceIssue>> {
    let content = std::fs::read_to_string(path).map_err(|e| {
        vec![TraceIssue {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    let trace_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".to_string());
    parse_trace(&trace_id, &content)
}

/// Parse and validate trace content (see [`load_trace`]).
pub fn parse_trace(trace_id: &str, content: &str) -> Result<Trace, Vec<TraceIssue>> {
    let mut issues: Vec<TraceIssue> = Vec::new();
    let mut meta: Option<(u64, SamplingPolicy)> = None;
    let mut frames: BTreeMap<u64, (usize, String)> = BTreeMap::new();
    let mut query: Option<(usize, TraceQuery)> = None;
    let mut sgg: BTreeMap<(u64, u64), String> = BTreeMap::new();
    let mut decisions: BTreeMap<u64, String> = BTreeMap::new();
    let mut answer: Option<String> = None;
    let mut ground_truth: Option<(usize, GroundTruth)> = None;

    let issue = |line: usize, message: String| TraceIssue {
        line: Some(line),
        message,
    };

    for (i, raw_line) in content.lines().enumerate() {
        let line_no = i + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = match serde_json::from_str(raw_line) {
            Ok(record) => record,
            Err(e) => {
                issues.push(issue(line_no, format!("malformed record: {e}")));
                continue;
            }
        };
        match record {
            TraceRecord::Meta {
                total_frames,
                policy,
            } => {
                if meta.is_some() {
                    issues.push(issue(line_no, "duplicate meta record".into()));
                } else {
                    if line_no != 1 {
                        issues.push(issue(line_no, "meta record must be the first line".into()));
                    }
                    if total_frames == 0 {
                        issues.push(issue(line_no, "total_frames must be >= 1".into()));
                    }
                    if let SamplingPolicy::Fixed { fps } = policy {
                        if !(fps.is_finite() && fps > 0.0) {
                            issues.push(issue(line_no, "fixed policy fps must be positive".into()));
                        }
                    }
                    meta = Some((total_frames, policy));
                }
            }
            TraceRecord::Frame { index, r#ref } => {
                if frames.insert(index, (line_no, r#ref)).is_some() {
                    issues.push(issue(line_no, format!("duplicate frame index {index}")));
                }
            }
            TraceRecord::Query {
                t_ask,
                text,
                scripted_condition_graph,
            } => {
                if query.is_some() {
                    issues.push(issue(line_no, "at most one query record is allowed".into()));
                } else {
                    if !(t_ask.is_finite() && t_ask >= 0.0) {
                        issues.push(issue(line_no, "query t_ask must be non-negative".into()));
                    }
                    query = Some((
                        line_no,
                        TraceQuery {
                            t_ask,
                            text,
                            scripted_condition_graph,
                        },
                    ));
                }
            }
            TraceRecord::Sgg {
                clip_span,
                output_text,
            } => {
                if clip_span.0 > clip_span.1 {
                    issues.push(issue(
                        line_no,
                        format!(
                            "sgg clip_span start {} exceeds end {}",
                            clip_span.0, clip_span.1
                        ),
                    ));
                } else if sgg.insert(clip_span, output_text).is_some() {
                    issues.push(issue(
                        line_no,
                        format!("duplicate sgg record for clip span {clip_span:?}"),
                    ));
                }
            }
            TraceRecord::Decision {
                step_index,
                reply_text,
            } => {
                if decisions.insert(step_index, reply_text).is_some() {
                    issues.push(issue(
                        line_no,
                        format!("duplicate decision record for step {step_index}"),
                    ));
                }
            }
            TraceRecord::Answer { text } => {
                if answer.is_some() {
                    issues.push(issue(
                        line_no,
                        "at most one answer record is allowed".into(),
                    ));
                } else {
                    answer = Some(text);
                }
            }
            TraceRecord::GroundTruth {
                t_lo,
                t_hi,
                expected_answer,
            } => {
                if ground_truth.is_some() {
                    issues.push(issue(
                        line_no,
                        "at most one ground_truth record is allowed".into(),
                    ));
                } else {
                    if t_lo > t_hi {
                        issues.push(issue(
                            line_no,
                            format!("ground_truth t_lo {t_lo} exceeds t_hi {t_hi}"),
                        ));
                    }
                    ground_truth = Some((
                        line_no,
                        GroundTruth {
                            t_lo,
                            t_hi,
                            expected_answer,
                        },
                    ));
                }
            }
        }
    }

    let Some((total_frames, policy)) = meta else {
        issues.push(TraceIssue {
            line: None,
            message: "missing meta record".into(),
        });
        return Err(issues);
    };

    // Frame indices must be exactly 0..n.
    let n = frames.len() as u64;
    if n == 0 {
        issues.push(TraceIssue {
            line: None,
            message: "trace has no frame records".into(),
        });
    }
    for (&index, (line_no, _)) in &frames {
        if index >= n {
            issues.push(TraceIssue {
                line: Some(*line_no),
                message: format!(
                    "frame indices must be contiguous from 0; index {index} leaves a gap"
                ),
            });
        }
    }

    let fps = policy.rate_for(total_frames);
    let end_t = if n == 0 { 0.0 } else { (n - 1) as f64 / fps };
    if let Some((line_no, q)) = &query {
        if q.t_ask > end_t + 1e-9 {
            issues.push(TraceIssue {
                line: Some(*line_no),
                message: format!(
                    "query t_ask {} is after the last sampled frame at {end_t}",
                    q.t_ask
                ),
            });
        }
    }
    if let Some((line_no, _)) = &ground_truth {
        if query.is_none() {
            issues.push(TraceIssue {
                line: Some(*line_no),
                message: "ground_truth requires a query record".into(),
            });
        }
    }

    if !issues.is_empty() {
        return Err(issues);
    }
    Ok(Trace {
        trace_id: trace_id.to_string(),
        total_frames,
        policy,
        frames: frames.into_values().map(|(_, r)| r).collect(),
        query: query.map(|(_, q)| q),
        sgg,
        decisions,
        answer,
        ground_truth: ground_truth.map(|(_, gt)| gt),
    })
}

/// Load every `*.jsonl` trace in a directory, sorted by trace id.
pub fn load_trace_dir(dir: &Path) -> Result<Vec<Trace>, Vec<TraceIssue>> {
    let mut paths: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| {
            vec![TraceIssue {
                line: None,
                message: format!("cannot read directory {}: {e}", dir.display()),
            }]
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    paths.sort();
    let mut traces = Vec::new();
    let mut issues = Vec::new();
    for path in paths {
        match load_trace(&path) {
            Ok(trace) => traces.push(trace),
            Err(mut errs) => {
                for err in &mut errs {
                    err.message = format!("{}: {}", path.display(), err.message);
                }
                issues.extend(errs);
            }
        }
    }
    if issues.is_empty() {
        Ok(traces)
    } else {
        Err(issues)
    }
}

/// The config file schema: pipeline fields plus harness-only extras. All
/// fields are optional; missing ones keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    /// Directory of prompt template files overriding the defaults.
    pub prompt_dir: Option<std::path::PathBuf>,
    /// Remote backend settings; unused by scripted replays but kept here so
    /// one config file can describe a full deployment.
    pub remote: Option<crate::backend::RemoteConfig>,
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let content = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&content)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        config
            .pipeline
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn bundle(&self) -> Result<PromptBundle, HarnessError> {
        match &self.prompt_dir {
            Some(dir) => Ok(PromptBundle::from_dir(dir)?),
            None => Ok(PromptBundle::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"{"kind":"meta","total_frames":10,"policy":{"fixed":{"fps":1.0}}}
{"kind":"frame","index":0,"ref":"f0"}
{"kind":"frame","index":1,"ref":"f1"}
{"kind":"frame","index":2,"ref":"f2"}
{"kind":"frame","index":3,"ref":"f3"}
{"kind":"frame","index":4,"ref":"f4"}
{"kind":"frame","index":5,"ref":"f5"}
{"kind":"frame","index":6,"ref":"f6"}
{"kind":"frame","index":7,"ref":"f7"}
{"kind":"frame","index":8,"ref":"f8"}
{"kind":"frame","index":9,"ref":"f9"}
{"kind":"query","t_ask":2.0,"text":"find it","scripted_condition_graph":"[a, b, c]"}
{"kind":"sgg","clip_span":[0,3],"output_text":"[a, b, c]"}
{"kind":"decision","step_index":0,"reply_text":"No"}
{"kind":"answer","text":"found"}
{"kind":"ground_truth","t_lo":3.0,"t_hi":5.0,"expected_answer":"found"}
"#;

    #[test]
    fn valid_trace_parses() {
        let trace = parse_trace("t", VALID).unwrap();
        assert_eq!(trace.frames.len(), 10);
        assert_eq!(trace.fps(), 1.0);
        assert_eq!(trace.query.as_ref().unwrap().t_ask, 2.0);
        assert_eq!(trace.sgg.len(), 1);
        assert_eq!(trace.ground_truth.as_ref().unwrap().t_hi, 5.0);
    }

    #[test]
    fn missing_meta_is_an_invariant_violation() {
        let err = parse_trace("t", r#"{"kind":"frame","index":0,"ref":"f0"}"#).unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("missing meta")));
    }

    #[test]
    fn meta_must_be_first() {
        let content = "{\"kind\":\"frame\",\"index\":0,\"ref\":\"f0\"}\n{\"kind\":\"meta\",\"total_frames\":1,\"policy\":\"streamingbench\"}\n";
        let err = parse_trace("t", content).unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("first line")));
    }

    #[test]
    fn inverted_ground_truth_window_is_rejected() {
        let content = VALID.replace(r#""t_lo":3.0,"t_hi":5.0"#, r#""t_lo":6.0,"t_hi":5.0"#);
        let err = parse_trace("t", &content).unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("exceeds t_hi")));
    }

    #[test]
    fn frame_gaps_and_duplicates_are_reported() {
        let content = "{\"kind\":\"meta\",\"total_frames\":3,\"policy\":\"streamingbench\"}\n{\"kind\":\"frame\",\"index\":0,\"ref\":\"f0\"}\n{\"kind\":\"frame\",\"index\":2,\"ref\":\"f2\"}\n";
        let err = parse_trace("t", content).unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("contiguous")));

        let content = "{\"kind\":\"meta\",\"total_frames\":3,\"policy\":\"streamingbench\"}\n{\"kind\":\"frame\",\"index\":0,\"ref\":\"f0\"}\n{\"kind\":\"frame\",\"index\":0,\"ref\":\"f0b\"}\n";
        let err = parse_trace("t", content).unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("duplicate frame")));
    }

    #[test]
    fn malformed_lines_carry_line_numbers() {
        let content = "{\"kind\":\"meta\",\"total_frames\":1,\"policy\":\"streamingbench\"}\nnot json\n{\"kind\":\"frame\",\"index\":0,\"ref\":\"f0\"}\n";
        let err = parse_trace("t", content).unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].line, Some(2));
        assert!(err[0].message.contains("malformed record"));
    }

    #[test]
    fn ground_truth_requires_query() {
        let content = "{\"kind\":\"meta\",\"total_frames\":1,\"policy\":\"streamingbench\"}\n{\"kind\":\"frame\",\"index\":0,\"ref\":\"f0\"}\n{\"kind\":\"ground_truth\",\"t_lo\":0.0,\"t_hi\":1.0,\"expected_answer\":\"x\"}\n";
        let err = parse_trace("t", content).unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("requires a query")));
    }

    #[test]
    fn jsonl_round_trip_is_identical() {
        let trace = parse_trace("t", VALID).unwrap();
        let rendered = trace.to_jsonl();
        let reparsed = parse_trace("t", &rendered).unwrap();
        assert_eq!(trace, reparsed);
        assert_eq!(rendered, reparsed.to_jsonl());
    }

    #[test]
    fn streamingbench_policy_sets_fps_from_total_frames() {
        let content = "{\"kind\":\"meta\",\"total_frames\":450,\"policy\":\"streamingbench\"}\n{\"kind\":\"frame\",\"index\":0,\"ref\":\"f0\"}\n";
        let trace = parse_trace("t", content).unwrap();
        assert_eq!(trace.fps(), 0.5);
    }
}
