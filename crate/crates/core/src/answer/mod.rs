//! Mapping-first grounded answering.

pub mod agent;
pub mod citations;
pub mod fill;
pub mod format;
pub mod present;

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::chunker::Chunk;
use crate::model::{ModelClient, ModelError, ModelResponse, SynthesisPrompt, REFUSAL_TOKEN};
use crate::schema::CanonicalField;

pub use agent::{run_agent_loop, ActivityEvent, AgentError, AgentOutcome, AgentTools};
pub use citations::{validate_citations, CitationCheck, CitationReport, DEFAULT_RELEVANCE_THRESHOLD};
pub use fill::{fill_form, suggest_candidates, Candidate, FieldOutcome, FieldStatus, FillConfig, FillReport, FormItem};
pub use format::{format_answer, format_answer_with, DateChoice, FormattedAnswer};
pub use present::{present_answer, AnswerPresentation, PresentedCitation};

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d+)\]").expect("static regex"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draft {
    /// Answer with inline `[n]` markers numbered 1..=citations.len().
    pub answer_text: String,
    /// Chunk ids; marker `[n]` refers to `citations[n - 1]`.
    pub citations: Vec<String>,
    pub refused: bool,
}

impl Draft {
    pub fn refused() -> Self {
        Draft { answer_text: String::new(), citations: Vec::new(), refused: true }
    }

    /// The answer with markers removed.
    pub fn plain_text(&self) -> String {
        strip_markers(&self.answer_text)
    }
}

pub fn strip_markers(text: &str) -> String {
    MARKER.replace_all(text, " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Marker numbers in order of appearance.
pub fn markers(text: &str) -> Vec<usize> {
    MARKER.captures_iter(text).filter_map(|c| c[1].parse().ok()).collect()
}

/// `<intent>. Original question: <raw>. Expected format: <format>.`
pub fn construct_query(field: &CanonicalField, raw_question: &str) -> String {
    let intent = field.intent.trim().trim_end_matches('.');
    let format = field.format.describe(field.data_type);
    let raw = raw_question.split_whitespace().collect::<Vec<_>>().join(" ");
    if raw.is_empty() {
        format!("{intent}. Expected format: {format}.")
    } else {
        format!("{intent}. Original question: {raw}. Expected format: {format}.")
    }
}

/// Asks the model for a cited answer grounded in `chunks`.
///
/// No chunks means refusal without calling the model. Markers are renumbered
/// 1..m by first appearance; markers outside 1..=chunks.len() are dropped.
pub fn synthesize(
    question: &str,
    field: &CanonicalField,
    chunks: &[Chunk],
    model: &dyn ModelClient,
) -> Result<Draft, ModelError> {
    if chunks.is_empty() {
        return Ok(Draft::refused());
    }
    let prompt = SynthesisPrompt {
        question: question.to_owned(),
        intent: field.intent.clone(),
        passages: chunks.iter().map(|c| c.text.clone()).collect(),
    };
    let text = match model.complete(&prompt.to_request())? {
        ModelResponse::Text(t) => t,
        ModelResponse::ToolCall { name, .. } => {
            tracing::warn!(tool = %name, "tool call during synthesis treated as refusal");
            return Ok(Draft::refused());
        }
    };
    if text.trim() == REFUSAL_TOKEN || text.trim().is_empty() {
        return Ok(Draft::refused());
    }
    let mut renumber: BTreeMap<usize, usize> = BTreeMap::new();
    let mut citations: Vec<String> = Vec::new();
    let mut by_chunk: BTreeMap<&str, usize> = BTreeMap::new();
    for n in markers(&text) {
        if n == 0 || n > chunks.len() {
            tracing::warn!(marker = n, passages = chunks.len(), "dropping out-of-range citation marker");
            continue;
        }
        if renumber.contains_key(&n) {
            continue;
        }
        let id = chunks[n - 1].id.as_str();
        let new = *by_chunk.entry(id).or_insert_with(|| {
            citations.push(id.to_owned());
            citations.len()
        });
        renumber.insert(n, new);
    }
    let rewritten = MARKER.replace_all(&text, |c: &regex::Captures| {
        c[1].parse::<usize>().ok().and_then(|n| renumber.get(&n)).map_or(String::new(), |m| format!("[{m}]"))
    });
    let answer_text = rewritten.split_whitespace().collect::<Vec<_>>().join(" ");
    if strip_markers(&answer_text).is_empty() {
        return Ok(Draft::refused());
    }
    Ok(Draft { answer_text, citations, refused: false })
}

/// Character-level edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::chunker::{Chunk, SourceType};
    use crate::schema::{CanonicalField, DataType, FormatRule};

    pub fn chunk(id: &str, text: &str) -> Chunk {
        let mut c = crate::index::test_chunk(id, text, SourceType::Personal, Some("u1"));
        c.source_url = format!("file://profile/{id}.txt");
        c
    }

    pub fn gpa_field() -> CanonicalField {
        CanonicalField::new(
            "user.academics.gpa",
            "cumulative grade point average",
            DataType::Number,
            vec!["gpa".into(), "grade point average".into()],
            FormatRule::NumericRange { min: Some(0.0), max: Some(4.0) },
            vec![],
            vec![],
            None,
        )
        .unwrap()
    }
}
