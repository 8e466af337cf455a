//! Report emission: canonical JSON, aggregate CSV, and markdown tables.

use std::fmt;
use std::str::FromStr;

use super::runner::{SuiteAggregates, SuiteReport};
use super::sweep::SweepReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" => Ok(Self::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Json => write!(f, "json"),
            Self::Csv => write!(f, "csv"),
            Self::Markdown => write!(f, "markdown"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportPayload {
    Suite(SuiteReport),
    Sweep(SweepReport),
}

/// Render a report. JSON is the canonical lossless form; CSV carries suite
/// aggregates (one row per sweep config); markdown renders the comparison
/// table.
pub fn emit_report(payload: &ReportPayload, format: ReportFormat) -> String {
    match (payload, format) {
        (ReportPayload::Suite(report), ReportFormat::Json) => to_json(report),
        (ReportPayload::Sweep(report), ReportFormat::Json) => to_json(report),
        (ReportPayload::Suite(report), ReportFormat::Csv) => suite_csv(report),
        (ReportPayload::Sweep(report), ReportFormat::Csv) => sweep_csv(report),
        (ReportPayload::Suite(report), ReportFormat::Markdown) => suite_markdown(report),
        (ReportPayload::Sweep(report), ReportFormat::Markdown) => sweep_markdown(report),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("reports serialize");
    out.push('\n');
    out
}

fn cell_f64(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

const AGG_HEADER: &str =
    "sessions,with_ground_truth,timing_accuracy,premature_rate,missed_rate,mean_decision_latency_ms";

fn aggregate_cells(a: &SuiteAggregates) -> String {
    format!(
        "{},{},{},{},{},{}",
        a.sessions,
        a.with_ground_truth,
        cell_f64(a.timing_accuracy),
        cell_f64(a.premature_rate),
        cell_f64(a.missed_rate),
        cell_f64(a.mean_decision_latency_ms),
    )
}

fn suite_csv(report: &SuiteReport) -> String {
    format!("{AGG_HEADER}\n{}\n", aggregate_cells(&report.aggregates))
}

fn sweep_csv(report: &SweepReport) -> String {
    let mut out = format!("guidance_mode,embed_mode,k,{AGG_HEADER}\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_escape(&row.guidance_mode.to_string()),
            csv_escape(match row.embed_mode {
                crate::scene_graph::EmbedMode::GraphText => "graph_text",
                crate::scene_graph::EmbedMode::OriginalText => "original_text",
            }),
            row.k,
            aggregate_cells(&row.aggregates),
        ));
    }
    out
}

fn md_f64(value: Option<f64>) -> String {
    value
        .map(|v| format!("{v:.3}"))
        .unwrap_or_else(|| "-".to_string())
}

fn suite_markdown(report: &SuiteReport) -> String {
    let mut out = String::from("| trace | t_ask | t_res | verdict | answer_match | warnings |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for s in &report.sessions {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            s.trace_id,
            s.t_ask.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
            s.t_res.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
            s.timing_verdict
                .map(|v| v.to_string())
                .unwrap_or_else(|| "-".into()),
            s.answer_match
                .map(|m| m.to_string())
                .unwrap_or_else(|| "-".into()),
            s.warnings.len(),
        ));
    }
    out.push_str(&format!(
        "\nsessions: {} | timing accuracy: {} | premature: {} | missed: {} | mean latency (ms): {}\n",
        report.aggregates.sessions,
        md_f64(report.aggregates.timing_accuracy),
        md_f64(report.aggregates.premature_rate),
        md_f64(report.aggregates.missed_rate),
        md_f64(report.aggregates.mean_decision_latency_ms),
    ));
    out
}

fn sweep_markdown(report: &SweepReport) -> String {
    let mut out = String::from(
        "| guidance | embed | k | sessions | timing acc | premature | missed | mean latency (ms) |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for row in &report.rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
            row.guidance_mode,
            match row.embed_mode {
                crate::scene_graph::EmbedMode::GraphText => "graph_text",
                crate::scene_graph::EmbedMode::OriginalText => "original_text",
            },
            row.k,
            row.aggregates.sessions,
            md_f64(row.aggregates.timing_accuracy),
            md_f64(row.aggregates.premature_rate),
            md_f64(row.aggregates.missed_rate),
            md_f64(row.aggregates.mean_decision_latency_ms),
        ));
    }
    out
}
