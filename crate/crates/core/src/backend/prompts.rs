//! Prompt templates and construction.
//!
//! Templates are plain text with `{query}`, `{context}` and `{timestamps}`
//! placeholders; a template may use each placeholder at most once. The
//! built-in defaults are intentionally editable — load replacements from a
//! directory of `sgg.txt`, `query_parse.txt`, `trigger.txt`, `answer.txt`.
//!
//! Prompt text is composed the same way for every backend: the timestamped
//! evidence block (when non-empty and the template does not place
//! `{context}` itself) is prepended, then the rendered instruction follows.
//! Golden tests pin these strings.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene_graph::SceneGraph;

/// How the user query is injected into scene-graph generation prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    /// No query awareness; the guidance slot is filled with "None".
    None,
    /// Inject the objects and relations of the parsed condition graph.
    Object,
    /// Inject the verbatim user query.
    Query,
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::Object => write!(f, "object"),
            Self::Query => write!(f, "query"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error(
        "template {template} uses placeholder {placeholder} {count} times; at most once is allowed"
    )]
    DuplicatePlaceholder {
        template: &'static str,
        placeholder: &'static str,
        count: usize,
    },
    #[error("template {template} must contain the {{query}} placeholder")]
    MissingQueryPlaceholder { template: &'static str },
    #[error("object guidance requires a non-empty parsed condition graph")]
    MissingConditionGraph,
}

const PLACEHOLDERS: [&str; 3] = ["{query}", "{context}", "{timestamps}"];
const TEMPLATE_FILES: [(&str, &str); 4] = [
    ("sgg", "sgg.txt"),
    ("query_parse", "query_parse.txt"),
    ("trigger", "trigger.txt"),
    ("answer", "answer.txt"),
];

const DEFAULT_SGG: &str = "\
You are watching a short clip from a live video stream.
List the salient visual facts as scene graph triplets, one per line, each formatted exactly as [subject, predicate, object].
Fold attributes into the labels, for example [woman in red, checking, mirror].
Output triplet lines only.
Query guidance: {query}";

const DEFAULT_QUERY_PARSE: &str = "\
Parse the user query into the scene it anticipates, as scene graph triplets.
Write one triplet per line, each formatted exactly as [subject, predicate, object].
Output triplet lines only.
User query: {query}";

const DEFAULT_TRIGGER: &str = "\
User query: {query}
Should I answer now? Yes or No.";

const DEFAULT_ANSWER: &str = "\
User query: {query}
Answer the query now based on everything observed in the stream so far.";

/// The four capability templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub sgg_template: String,
    pub query_parse_template: String,
    pub trigger_template: String,
    pub answer_template: String,
}

impl Default for PromptBundle {
    fn default() -> Self {
        Self {
            sgg_template: DEFAULT_SGG.to_string(),
            query_parse_template: DEFAULT_QUERY_PARSE.to_string(),
            trigger_template: DEFAULT_TRIGGER.to_string(),
            answer_template: DEFAULT_ANSWER.to_string(),
        }
    }
}

impl PromptBundle {
    /// Load templates from `sgg.txt`, `query_parse.txt`, `trigger.txt` and
    /// `answer.txt` in `dir`. Missing files keep their defaults.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut bundle = Self::default();
        for (name, file) in TEMPLATE_FILES {
            let path = dir.join(file);
            if path.exists() {
                let text = std::fs::read_to_string(&path)?;
                let slot = match name {
                    "sgg" => &mut bundle.sgg_template,
                    "query_parse" => &mut bundle.query_parse_template,
                    "trigger" => &mut bundle.trigger_template,
                    _ => &mut bundle.answer_template,
                };
                *slot = text.trim_end().to_string();
            }
        }
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let templates: [(&'static str, &str); 4] = [
            ("sgg", &self.sgg_template),
            ("query_parse", &self.query_parse_template),
            ("trigger", &self.trigger_template),
            ("answer", &self.answer_template),
        ];
        for (name, text) in templates {
            for placeholder in PLACEHOLDERS {
                let count = text.matches(placeholder).count();
                if count > 1 {
                    return Err(PromptError::DuplicatePlaceholder {
                        template: name,
                        placeholder: match placeholder {
                            "{query}" => "{query}",
                            "{context}" => "{context}",
                            _ => "{timestamps}",
                        },
                        count,
                    });
                }
            }
            if !text.contains("{query}") {
                return Err(PromptError::MissingQueryPlaceholder { template: name });
            }
        }
        Ok(())
    }
}

fn substitute(template: &str, query: &str, context: &str, timestamps: &str) -> String {
    template
        .replace("{query}", query)
        .replace("{context}", context)
        .replace("{timestamps}", timestamps)
}

/// The guidance string substituted into the SGG template's query slot.
pub fn guidance_injection(
    mode: GuidanceMode,
    query: &str,
    condition: Option<&SceneGraph>,
) -> Result<String, PromptError> {
    match mode {
        GuidanceMode::None => Ok("None".to_string()),
        GuidanceMode::Query => Ok(query.to_string()),
        GuidanceMode::Object => {
            let graph = condition
                .filter(|g| !g.triplets.is_empty())
                .ok_or(PromptError::MissingConditionGraph)?;
            let mut objects: Vec<&str> = Vec::new();
            let mut relations: Vec<&str> = Vec::new();
            for t in &graph.triplets {
                for label in [t.subject(), t.object()] {
                    if !objects.contains(&label) {
                        objects.push(label);
                    }
                }
                if !relations.contains(&t.predicate()) {
                    relations.push(t.predicate());
                }
            }
            Ok(format!(
                "objects: {}. relations: {}",
                objects.join(", "),
                relations.join(", ")
            ))
        }
    }
}

pub fn build_sgg_prompt(bundle: &PromptBundle, injection: &str) -> String {
    substitute(&bundle.sgg_template, injection, "", "")
}

pub fn build_query_parse_prompt(bundle: &PromptBundle, query: &str) -> String {
    substitute(&bundle.query_parse_template, query, "", "")
}

/// Compose an instruction template with the retrieved evidence block. If
/// the template places `{context}` itself it is substituted in place;
/// otherwise a non-empty block is prepended, blank-line separated.
fn render_with_context(template: &str, block: &str, timestamps: &str, query: &str) -> String {
    if template.contains("{context}") {
        substitute(template, query, block, timestamps)
    } else {
        let body = substitute(template, query, "", timestamps);
        if block.is_empty() {
            body
        } else {
            format!("{block}\n\n{body}")
        }
    }
}

pub fn build_trigger_prompt(
    bundle: &PromptBundle,
    block: &str,
    timestamps: &str,
    query: &str,
) -> String {
    render_with_context(&bundle.trigger_template, block, timestamps, query)
}

pub fn build_answer_prompt(
    bundle: &PromptBundle,
    block: &str,
    timestamps: &str,
    query: &str,
) -> String {
    render_with_context(&bundle.answer_template, block, timestamps, query)
}
