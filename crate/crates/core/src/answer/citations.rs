//! Post-hoc checks that a draft's citations support it.

use serde::{Deserialize, Serialize};

use super::Draft;
use crate::index::LexicalIndex;
use crate::text::{contains_phrase, normalize};

/// Minimum cosine between answer text and cited chunk. Extracted answers
/// are one short sentence scored against a whole chunk, so the scale sits
/// far below what a dense embedding comparison would use.
pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationCheck {
    pub chunk_id: String,
    pub exists: bool,
    pub relevance: f64,
    pub source_present: bool,
    pub contains_answer: bool,
}

impl CitationCheck {
    pub fn is_valid(&self, threshold: f64) -> bool {
        self.exists && self.source_present && self.relevance >= threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationReport {
    pub checks: Vec<CitationCheck>,
    /// Share of citations that are valid. With no citations it is 1.0 for a
    /// refused draft and 0.0 otherwise.
    pub valid_fraction: f64,
}

pub fn validate_citations(draft: &Draft, index: &LexicalIndex, threshold: f64) -> CitationReport {
    let answer = draft.plain_text();
    let needle = normalize(&answer);
    let checks: Vec<CitationCheck> = draft
        .citations
        .iter()
        .map(|id| match index.get(id) {
            None => CitationCheck {
                chunk_id: id.clone(),
                exists: false,
                relevance: 0.0,
                source_present: false,
                contains_answer: false,
            },
            Some(c) => CitationCheck {
                chunk_id: id.clone(),
                exists: true,
                relevance: index.cosine(&answer, &c.text),
                source_present: !c.source_url.trim().is_empty(),
                contains_answer: contains_phrase(&normalize(&c.text), &needle),
            },
        })
        .collect();
    let valid = checks.iter().filter(|c| c.is_valid(threshold)).count();
    let valid_fraction = if checks.is_empty() {
        if draft.refused { 1.0 } else { 0.0 }
    } else { valid as f64 / checks.len() as f64 };
    CitationReport { checks, valid_fraction }
}
