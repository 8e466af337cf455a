//! Synthetic trace generation for property tests and demos.
//!
//! Traces come out of a seeded SplitMix64 stream, so the same parameters
//! always produce the same trace on every platform. The generator spreads
//! probability mass over the paths a real stream exercises: windows with
//! clean triplet lines, chatty preambles, missing or garbage generator
//! output, unparseable and missing trigger replies, queries whose scripted
//! parse fails, yes decisions with and without a usable answer, and
//! ground-truth windows placed so suites mix in-window, premature, and
//! missed verdicts.

use std::collections::BTreeMap;

use crate::pipeline::SamplingPolicy;
use crate::rng::SplitMix64;

use super::{GroundTruth, Trace, TraceQuery};

const SUBJECTS: [&str; 10] = [
    "woman", "boy", "man", "girl", "dog", "chef", "robot", "bird", "rider", "child",
];
const PREDICATES: [&str; 10] = [
    "in",
    "holding",
    "next_to",
    "checking",
    "talking_with",
    "riding",
    "watching",
    "near",
    "behind",
    "entering",
];
const OBJECTS: [&str; 10] = [
    "red", "mirror", "car", "kitchen", "park", "book", "ball", "house", "stage", "door",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub seed: u64,
    /// Number of sampled frames (minimum 2).
    pub frames: u64,
    /// Clip window the scripted generation records are keyed to; must
    /// match the replay config's `clip_window_frames`.
    pub window: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 24,
            window: 4,
        }
    }
}

pub fn gen_trace(params: &GenParams) -> Trace {
    let mut rng = SplitMix64::new(params.seed);
    let n = params.frames.max(2);
    let w = u64::from(params.window.max(1));

    let frames: Vec<String> = (0..n).map(|i| format!("frame-{i:04}")).collect();

    // One query per trace, at an integer frame time.
    let t_ask_idx = rng.next_below(n);
    let subject = *rng.pick(&SUBJECTS);
    let predicate = *rng.pick(&PREDICATES);
    let object = *rng.pick(&OBJECTS);
    let condition_line = format!("[{subject}, {predicate}, {object}]");
    let query_text = format!(
        "Respond when the {subject} is {} {object}.",
        predicate.replace('_', " ")
    );
    let scripted_condition_graph = if rng.chance(0.8) {
        Some(condition_line.clone())
    } else if rng.chance(0.5) {
        // Parses to nothing: exercises the original-text fallback.
        Some("I could not find a structured reading of that.".to_string())
    } else {
        // Missing entirely: exercises the backend-failure fallback.
        None
    };

    // Scripted generation output per complete window.
    let mut sgg: BTreeMap<(u64, u64), String> = BTreeMap::new();
    let windows = n / w;
    let evidence_window = if windows > 0 {
        Some(rng.next_below(windows))
    } else {
        None
    };
    for win in 0..windows {
        let span = (win * w, win * w + w - 1);
        if rng.chance(0.12) {
            continue; // no record: the window is skipped with a warning
        }
        if rng.chance(0.08) {
            sgg.insert(span, "the model rambled with no structure".to_string());
            continue;
        }
        let mut lines: Vec<String> = Vec::new();
        if rng.chance(0.2) {
            lines.push("Sure, here are the triplets:".to_string());
        }
        for _ in 0..=rng.next_below(3) {
            lines.push(format!(
                "[{}, {}, {}]",
                rng.pick(&SUBJECTS),
                rng.pick(&PREDICATES),
                rng.pick(&OBJECTS)
            ));
        }
        if Some(win) == evidence_window && rng.chance(0.6) {
            lines.push(condition_line.clone());
        }
        sgg.insert(span, lines.join("\n"));
    }

    // Trigger replies: one step per frame from t_ask on, until yes.
    let steps = n - t_ask_idx;
    let yes_step = if rng.chance(0.7) {
        Some(rng.next_below(steps))
    } else {
        None
    };
    let mut decisions: BTreeMap<u64, String> = BTreeMap::new();
    let last_scripted = yes_step.unwrap_or(steps - 1);
    for step in 0..=last_scripted {
        if Some(step) == yes_step {
            decisions.insert(step, "Yes".to_string());
            continue;
        }
        match rng.next_below(10) {
            0 => {} // missing record: degraded to silence with a warning
            1 => {
                decisions.insert(step, "maybe, hard to tell".to_string());
            }
            2 => {
                decisions.insert(step, "no, not yet.".to_string());
            }
            _ => {
                decisions.insert(step, "No".to_string());
            }
        }
    }

    let expected_answer = format!("evt-{}", rng.next_below(1000));
    let answer = if yes_step.is_some() {
        if rng.chance(0.1) {
            None // answer generation fails; the respond degrades to silence
        } else if rng.chance(0.8) {
            Some(format!("The moment arrives: {expected_answer}."))
        } else {
            Some("Something unrelated happened.".to_string())
        }
    } else if rng.chance(0.2) {
        Some("An answer nobody asked for.".to_string())
    } else {
        None
    };

    let ground_truth = if rng.chance(0.85) {
        let a = t_ask_idx + rng.next_below(n - t_ask_idx);
        let b = t_ask_idx + rng.next_below(n - t_ask_idx);
        Some(GroundTruth {
            t_lo: a.min(b) as f64,
            t_hi: a.max(b) as f64,
            expected_answer,
        })
    } else {
        None
    };

    Trace {
        trace_id: format!("gen-{:020}", params.seed),
        total_frames: n,
        policy: SamplingPolicy::Fixed { fps: 1.0 },
        frames,
        query: Some(TraceQuery {
            t_ask: t_ask_idx as f64,
            text: query_text,
            scripted_condition_graph,
        }),
        sgg,
        decisions,
        answer,
        ground_truth,
    }
}
