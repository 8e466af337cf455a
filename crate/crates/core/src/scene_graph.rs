//! Scene graph domain types, linearization, and timestamp tokens.
//!
//! A scene graph is an ordered list of `(subject, predicate, object)`
//! triplets abstracted from one clip of the stream. Graphs are linearized
//! into natural-language phrases for embedding: each triplet becomes
//! `"subject predicate object"` (underscores become spaces, whitespace runs
//! collapse), and a graph is its phrases joined by `"; "`.
//!
//! Generator output is parsed with a line-oriented grammar: every line of
//! the form `[subject, predicate, object]` yields one triplet, anything
//! else is skipped and counted, so chatty model preambles do not break the
//! stream.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Separator between triplet phrases in a linearized graph.
pub const GRAPH_SEPARATOR: &str = "; ";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneGraphError {
    #[error("triplet {0} is empty after trimming")]
    EmptyField(&'static str),
    #[error("triplet {field} contains the graph separator after normalization: {value:?}")]
    SeparatorInField { field: &'static str, value: String },
    #[error("scene graph has no triplets")]
    EmptyGraph,
    #[error("timestamp must be a non-negative number of seconds, got {0}")]
    NegativeTime(f64),
    #[error("no triplets found in generator output ({skipped} non-matching line(s))")]
    NoTripletsFound { skipped: usize },
    #[error("clip span start {0} exceeds end {1}")]
    InvalidClipSpan(u64, u64),
    #[error("query graphs carry no clip span")]
    QueryGraphWithSpan,
    #[error("condition graph is empty and no parse fallback was recorded")]
    EmptyConditionGraph,
}

/// One `(subject, predicate, object)` fact. Labels are open-vocabulary and
/// may carry inline attributes ("woman in red"). Fields are validated at
/// construction: non-empty after trimming, and free of the graph separator
/// once normalized.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triplet {
    subject: String,
    predicate: String,
    object: String,
}

impl Triplet {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
    ) -> Result<Self, SceneGraphError> {
        let subject = validate_label("subject", subject.into())?;
        let predicate = validate_label("predicate", predicate.into())?;
        let object = validate_label("object", object.into())?;
        Ok(Self {
            subject,
            predicate,
            object,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn object(&self) -> &str {
        &self.object
    }
}

fn validate_label(field: &'static str, raw: String) -> Result<String, SceneGraphError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(SceneGraphError::EmptyField(field));
    }
    // Semicolons are rejected outright: a label merely ending in ';' would
    // surface the "; " separator once labels are joined into a phrase.
    if normalize_label(trimmed).contains(';') {
        return Err(SceneGraphError::SeparatorInField {
            field,
            value: trimmed.to_string(),
        });
    }
    Ok(trimmed.to_string())
}

/// Underscores become spaces, whitespace runs collapse to one space.
fn normalize_label(label: &str) -> String {
    label
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

// Triplets serialize as `[subject, predicate, object]` arrays so trace and
// report files stay close to the bracket grammar.
impl Serialize for Triplet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (&self.subject, &self.predicate, &self.object).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Triplet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (s, p, o) = <(String, String, String)>::deserialize(deserializer)?;
        Triplet::new(s, p, o).map_err(D::Error::custom)
    }
}

/// Inclusive frame-index range a graph was generated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(u64, u64)", into = "(u64, u64)")]
pub struct ClipSpan {
    pub start: u64,
    pub end: u64,
}

impl ClipSpan {
    pub fn new(start: u64, end: u64) -> Result<Self, SceneGraphError> {
        if start > end {
            return Err(SceneGraphError::InvalidClipSpan(start, end));
        }
        Ok(Self { start, end })
    }

    pub fn frame_count(&self) -> u64 {
        self.end - self.start + 1
    }
}

impl TryFrom<(u64, u64)> for ClipSpan {
    type Error = SceneGraphError;
    fn try_from((start, end): (u64, u64)) -> Result<Self, Self::Error> {
        Self::new(start, end)
    }
}

impl From<ClipSpan> for (u64, u64) {
    fn from(span: ClipSpan) -> Self {
        (span.start, span.end)
    }
}

/// Who produced a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Model,
    Scripted,
    Query,
}

/// A timestamped set of triplets from one clip (or from a parsed query,
/// in which case there is no clip span). Triplet order is preserved exactly
/// as produced; duplicates are permitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub timestamp_s: f64,
    pub clip_span: Option<ClipSpan>,
    pub source: GraphSource,
    pub triplets: Vec<Triplet>,
}

impl SceneGraph {
    pub fn new(
        triplets: Vec<Triplet>,
        timestamp_s: f64,
        clip_span: Option<ClipSpan>,
        source: GraphSource,
    ) -> Result<Self, SceneGraphError> {
        if timestamp_s.is_nan() || timestamp_s < 0.0 {
            return Err(SceneGraphError::NegativeTime(timestamp_s));
        }
        if source == GraphSource::Query && clip_span.is_some() {
            return Err(SceneGraphError::QueryGraphWithSpan);
        }
        Ok(Self {
            timestamp_s,
            clip_span,
            source,
            triplets,
        })
    }
}

/// Whether a query's retrieval embedding comes from its parsed graph text
/// or from the raw query string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    GraphText,
    OriginalText,
}

/// The scene graph parsed from a user query: the evidence the query
/// anticipates. When parsing fails, `parse_fallback` is set and the raw
/// query text stands in for the graph text.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryConditionGraph {
    pub graph: SceneGraph,
    pub original_query: String,
    pub embed_mode: EmbedMode,
    pub parse_fallback: bool,
}

impl QueryConditionGraph {
    /// Build from a successfully parsed condition graph.
    pub fn parsed(
        graph: SceneGraph,
        original_query: impl Into<String>,
        embed_mode: EmbedMode,
    ) -> Result<Self, SceneGraphError> {
        if embed_mode == EmbedMode::GraphText && graph.triplets.is_empty() {
            return Err(SceneGraphError::EmptyConditionGraph);
        }
        Ok(Self {
            graph,
            original_query: original_query.into(),
            embed_mode,
            parse_fallback: false,
        })
    }

    /// Build when query parsing produced no usable graph; the session keeps
    /// streaming and embeds the raw query instead.
    pub fn fallback(
        original_query: impl Into<String>,
        embed_mode: EmbedMode,
        t_ask: f64,
    ) -> Result<Self, SceneGraphError> {
        Ok(Self {
            graph: SceneGraph::new(Vec::new(), t_ask, None, GraphSource::Query)?,
            original_query: original_query.into(),
            embed_mode,
            parse_fallback: true,
        })
    }

    /// The text whose embedding stands for the query in retrieval.
    pub fn embed_source_text(&self) -> String {
        match self.embed_mode {
            EmbedMode::GraphText if !self.parse_fallback && !self.graph.triplets.is_empty() => {
                linearize_graph(&self.graph).expect("non-empty condition graph")
            }
            _ => self.original_query.clone(),
        }
    }
}

/// Render one triplet as a natural-language phrase: the three labels joined
/// by single spaces, underscores replaced and whitespace runs collapsed.
pub fn linearize_triplet(triplet: &Triplet) -> String {
    format!(
        "{} {} {}",
        normalize_label(&triplet.subject),
        normalize_label(&triplet.predicate),
        normalize_label(&triplet.object)
    )
}

/// Render a whole graph: triplet phrases joined by `"; "` in triplet order.
pub fn linearize_graph(graph: &SceneGraph) -> Result<String, SceneGraphError> {
    if graph.triplets.is_empty() {
        return Err(SceneGraphError::EmptyGraph);
    }
    Ok(graph
        .triplets
        .iter()
        .map(linearize_triplet)
        .collect::<Vec<_>>()
        .join(GRAPH_SEPARATOR))
}

/// Textual timestamp token with exactly one fractional digit: `<2.0s>`.
pub fn format_timestamp_token(t_s: f64) -> Result<String, SceneGraphError> {
    if t_s.is_nan() || t_s < 0.0 {
        return Err(SceneGraphError::NegativeTime(t_s));
    }
    Ok(format!("<{t_s:.1}s>"))
}

/// A parse of generator output: the recovered graph plus how many non-blank
/// lines did not match the bracket grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGraph {
    pub graph: SceneGraph,
    pub skipped_lines: usize,
}

/// Parse generator output with the line-oriented bracket grammar. Each line
/// `[subject, predicate, object]` yields one triplet; blank lines are
/// ignored; any other line is skipped and counted.
pub fn parse_graph_from_model_output(
    raw: &str,
    timestamp_s: f64,
    clip_span: Option<ClipSpan>,
) -> Result<ParsedGraph, SceneGraphError> {
    parse_graph(raw, timestamp_s, clip_span, GraphSource::Model)
}

/// Same grammar applied to a query-parse reply; the result carries
/// `source = query` and no clip span.
pub fn parse_condition_graph(raw: &str, t_ask: f64) -> Result<ParsedGraph, SceneGraphError> {
    parse_graph(raw, t_ask, None, GraphSource::Query)
}

fn parse_graph(
    raw: &str,
    timestamp_s: f64,
    clip_span: Option<ClipSpan>,
    source: GraphSource,
) -> Result<ParsedGraph, SceneGraphError> {
    let mut triplets = Vec::new();
    let mut skipped = 0usize;
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_triplet_line(line) {
            Some(triplet) => triplets.push(triplet),
            None => skipped += 1,
        }
    }
    if triplets.is_empty() {
        return Err(SceneGraphError::NoTripletsFound { skipped });
    }
    Ok(ParsedGraph {
        graph: SceneGraph::new(triplets, timestamp_s, clip_span, source)?,
        skipped_lines: skipped,
    })
}

fn parse_triplet_line(line: &str) -> Option<Triplet> {
    let inner = line.trim().strip_prefix('[')?.strip_suffix(']')?;
    let mut parts = inner.split(',');
    let subject = parts.next()?;
    let predicate = parts.next()?;
    let object = parts.next()?;
    if parts.next().is_some() {
        return None;
    }
    Triplet::new(subject.trim(), predicate.trim(), object.trim()).ok()
}

/// Emit a graph in the bracket grammar, one triplet per line. Inverse of
/// [`parse_graph_from_model_output`] for bracket-safe labels; used by the
/// trace generator and round-trip tests.
pub fn render_bracket(graph: &SceneGraph) -> String {
    graph
        .triplets
        .iter()
        .map(|t| format!("[{}, {}, {}]", t.subject(), t.predicate(), t.object()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triplet(s: &str, p: &str, o: &str) -> Triplet {
        Triplet::new(s, p, o).unwrap()
    }

    fn graph(triplets: Vec<Triplet>) -> SceneGraph {
        SceneGraph::new(triplets, 0.0, None, GraphSource::Scripted).unwrap()
    }

    #[test]
    fn linearize_plain_triplet() {
        assert_eq!(
            linearize_triplet(&triplet("woman", "in", "red")),
            "woman in red"
        );
        assert_eq!(linearize_triplet(&triplet("a", "b", "c")), "a b c");
    }

    #[test]
    fn linearize_normalizes_underscores_and_whitespace() {
        assert_eq!(
            linearize_triplet(&triplet("boy", "next_to", "car")),
            "boy next to car"
        );
        assert_eq!(
            linearize_triplet(&triplet("young  boy", "sitting _ near", "old\tcar")),
            "young boy sitting near old car"
        );
    }

    #[test]
    fn triplet_rejects_empty_fields() {
        assert_eq!(
            Triplet::new("", "in", "red").unwrap_err(),
            SceneGraphError::EmptyField("subject")
        );
        assert_eq!(
            Triplet::new("woman", "  ", "red").unwrap_err(),
            SceneGraphError::EmptyField("predicate")
        );
    }

    #[test]
    fn triplet_rejects_separator_in_normalized_label() {
        let err = Triplet::new("woman; tall", "in", "red").unwrap_err();
        assert!(matches!(
            err,
            SceneGraphError::SeparatorInField {
                field: "subject",
                ..
            }
        ));
        let err = Triplet::new("a", "x;_y", "c").unwrap_err();
        assert!(matches!(
            err,
            SceneGraphError::SeparatorInField {
                field: "predicate",
                ..
            }
        ));
        // A trailing semicolon would surface "; " once joined into a phrase.
        let err = Triplet::new("a", "b", "c;").unwrap_err();
        assert!(matches!(
            err,
            SceneGraphError::SeparatorInField {
                field: "object",
                ..
            }
        ));
    }

    #[test]
    fn linearize_graph_joins_with_separator() {
        let g = graph(vec![triplet("woman", "in", "red")]);
        assert_eq!(linearize_graph(&g).unwrap(), "woman in red");

        let g = graph(vec![
            triplet("woman", "in", "red"),
            triplet("woman", "checking", "mirror"),
        ]);
        assert_eq!(
            linearize_graph(&g).unwrap(),
            "woman in red; woman checking mirror"
        );
    }

    #[test]
    fn linearize_empty_graph_errors() {
        let g = graph(Vec::new());
        assert_eq!(
            linearize_graph(&g).unwrap_err(),
            SceneGraphError::EmptyGraph
        );
    }

    #[test]
    fn timestamp_token_examples() {
        assert_eq!(format_timestamp_token(2.0).unwrap(), "<2.0s>");
        assert_eq!(format_timestamp_token(0.0).unwrap(), "<0.0s>");
        assert_eq!(format_timestamp_token(17.25).unwrap(), "<17.2s>");
        assert!(matches!(
            format_timestamp_token(-1.0),
            Err(SceneGraphError::NegativeTime(_))
        ));
        assert!(matches!(
            format_timestamp_token(f64::NAN),
            Err(SceneGraphError::NegativeTime(_))
        ));
    }

    #[test]
    fn parse_bracket_lines() {
        let parsed =
            parse_graph_from_model_output("[woman, in, red]\n[woman, checking, mirror]", 2.0, None)
                .unwrap();
        assert_eq!(parsed.graph.triplets.len(), 2);
        assert_eq!(parsed.skipped_lines, 0);
        assert_eq!(parsed.graph.source, GraphSource::Model);
    }

    #[test]
    fn parse_skips_noise_lines() {
        let parsed =
            parse_graph_from_model_output("noise line\n[boy, next_to, car]", 1.0, None).unwrap();
        assert_eq!(parsed.graph.triplets.len(), 1);
        assert_eq!(parsed.skipped_lines, 1);
        assert_eq!(
            linearize_triplet(&parsed.graph.triplets[0]),
            "boy next to car"
        );
    }

    #[test]
    fn parse_without_structure_errors() {
        let err = parse_graph_from_model_output("no structure at all", 1.0, None).unwrap_err();
        assert_eq!(err, SceneGraphError::NoTripletsFound { skipped: 1 });
    }

    #[test]
    fn parse_ignores_blank_lines_and_bad_arity() {
        let parsed =
            parse_graph_from_model_output("\n[a, b, c]\n\n[a, b]\n[a, b, c, d]\n", 1.0, None)
                .unwrap();
        assert_eq!(parsed.graph.triplets.len(), 1);
        assert_eq!(parsed.skipped_lines, 2);
    }

    #[test]
    fn query_graph_rejects_clip_span() {
        let span = ClipSpan::new(0, 3).unwrap();
        let err = SceneGraph::new(Vec::new(), 0.0, Some(span), GraphSource::Query).unwrap_err();
        assert_eq!(err, SceneGraphError::QueryGraphWithSpan);
    }

    #[test]
    fn embed_source_text_follows_mode_and_fallback() {
        let parsed = parse_condition_graph("[number 20, appears_in, sun]", 5.0).unwrap();
        let q = QueryConditionGraph::parsed(
            parsed.graph.clone(),
            "the number 20 appears in the middle of the sun",
            EmbedMode::GraphText,
        )
        .unwrap();
        assert_eq!(q.embed_source_text(), "number 20 appears in sun");

        let q = QueryConditionGraph::parsed(
            parsed.graph,
            "the number 20 appears in the middle of the sun",
            EmbedMode::OriginalText,
        )
        .unwrap();
        assert_eq!(
            q.embed_source_text(),
            "the number 20 appears in the middle of the sun"
        );

        let q = QueryConditionGraph::fallback("raw query", EmbedMode::GraphText, 5.0).unwrap();
        assert!(q.parse_fallback);
        assert_eq!(q.embed_source_text(), "raw query");
    }

    #[test]
    fn triplet_serde_is_a_three_element_array() {
        let t = triplet("woman", "in", "red");
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"["woman","in","red"]"#);
        let back: Triplet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Triplet>(r#"["","in","red"]"#).is_err());
    }

    #[test]
    fn scene_graph_serializes_to_the_structured_record() {
        let g = SceneGraph::new(
            vec![
                triplet("woman", "in", "red"),
                triplet("woman", "checking", "mirror"),
            ],
            1.5,
            Some(ClipSpan::new(0, 3).unwrap()),
            GraphSource::Model,
        )
        .unwrap();
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(
            json,
            r#"{"timestamp_s":1.5,"clip_span":[0,3],"source":"model","triplets":[["woman","in","red"],["woman","checking","mirror"]]}"#
        );
        let back: SceneGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
