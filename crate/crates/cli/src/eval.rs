//! Metrics over a fill report.

use serde::{Deserialize, Serialize};

use groundform_core::answer::{validate_citations, FieldOutcome, FieldStatus, DEFAULT_RELEVANCE_THRESHOLD};
use groundform_core::fieldmap::Tier;
use groundform_core::fixtures::{conditional_cases, CaseResult};
use groundform_core::index::LexicalIndex;
use groundform_core::schema::{validate_value, CanonicalSchema};

use crate::forms::{FillRun, ItemTruth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    pub fill_rate: f64,
    pub citation_present_rate: f64,
    pub citation_valid_rate: f64,
    pub conditional_rate: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Floors { fill_rate: 0.80, citation_present_rate: 0.95, citation_valid_rate: 1.0, conditional_rate: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteScore {
    pub passed: usize,
    pub total: usize,
    pub failed_cases: Vec<CaseResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub form: String,
    pub question: String,
    pub field_id: Option<String>,
    pub expected_field: Option<String>,
    pub tier: Tier,
    pub status: FieldStatus,
    pub value: Option<String>,
    pub citations: Vec<String>,
    /// None for questions that produced no answer.
    pub citation_valid: Option<bool>,
    pub type_conforms: Option<bool>,
    pub mapping_correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fill_rate: f64,
    pub visible: usize,
    pub filled: usize,
    /// Over answers that were not refused.
    pub citation_present_rate: f64,
    pub citation_valid_rate: f64,
    /// Over answers that reached formatting.
    pub type_conformity_rate: f64,
    pub conditional_suite: SuiteScore,
    /// Over questions with an expected field.
    pub mapping_accuracy: f64,
    pub floors: Floors,
    /// Metrics below their floor; empty when the run passes.
    pub below_floor: Vec<String>,
    pub questions: Vec<QuestionRow>,
}

impl EvalReport {
    pub fn passed(&self) -> bool {
        self.below_floor.is_empty()
    }
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// An answer's citations hold when there is at least one, and each names an
/// indexed chunk that is relevant to and contains the answer.
fn citations_hold(outcome: &FieldOutcome, index: &LexicalIndex) -> Option<bool> {
    let draft = outcome.draft.as_ref().filter(|d| !d.refused)?;
    let report = validate_citations(draft, index, DEFAULT_RELEVANCE_THRESHOLD);
    Some(!report.checks.is_empty() && report.checks.iter().all(|c| c.is_valid(DEFAULT_RELEVANCE_THRESHOLD) && c.contains_answer))
}

fn row(form: &str, outcome: &FieldOutcome, truth: Option<&ItemTruth>, index: &LexicalIndex, schema: &CanonicalSchema) -> QuestionRow {
    let expected_field = truth.and_then(|t| t.expected_field.clone());
    let type_conforms = match (&outcome.formatted, outcome.field_id.as_deref().and_then(|id| schema.get(id))) {
        (Some(f), Some(field)) => Some(validate_value(field, &f.value).passed && f.violations.is_empty()),
        _ => None,
    };
    QuestionRow {
        form: form.to_owned(),
        question: outcome.question.clone(),
        field_id: outcome.field_id.clone(),
        mapping_correct: expected_field.as_ref().map(|e| outcome.field_id.as_deref().unwrap_or("") == e.as_str()),
        expected_field,
        tier: outcome.tier,
        status: outcome.status,
        value: outcome.formatted.as_ref().map(|f| f.value.clone()),
        citations: outcome.draft.as_ref().map(|d| d.citations.clone()).unwrap_or_default(),
        citation_valid: citations_hold(outcome, index),
        type_conforms,
    }
}

pub fn run_conditional_suite() -> SuiteScore {
    let cases = conditional_cases();
    let results: Vec<CaseResult> = cases
        .iter()
        .map(|c| {
            c.run().unwrap_or_else(|e| CaseResult { name: c.name.clone(), passed: false, mismatches: vec![e.to_string()] })
        })
        .collect();
    let passed = results.iter().filter(|r| r.passed).count();
    SuiteScore { passed, total: results.len(), failed_cases: results.into_iter().filter(|r| !r.passed).collect() }
}

pub fn evaluate(run: &FillRun, index: &LexicalIndex, schema: &CanonicalSchema, floors: Floors) -> EvalReport {
    let questions: Vec<QuestionRow> = run
        .forms
        .iter()
        .flat_map(|f| f.report.fields.iter().enumerate().map(move |(i, o)| (f, i, o)))
        .map(|(f, i, o)| row(&f.name, o, f.truth.get(i), index, schema))
        .collect();
    let visible: usize = run.forms.iter().map(|f| f.report.visible).sum();
    let filled: usize = run.forms.iter().map(|f| f.report.filled).sum();
    let answered: Vec<&QuestionRow> = questions.iter().filter(|q| q.citation_valid.is_some()).collect();
    let cited = answered.iter().filter(|q| !q.citations.is_empty()).count();
    let valid = answered.iter().filter(|q| q.citation_valid == Some(true)).count();
    let typed: Vec<bool> = questions.iter().filter_map(|q| q.type_conforms).collect();
    let mapped: Vec<bool> = questions.iter().filter_map(|q| q.mapping_correct).collect();
    let suite = run_conditional_suite();

    let fill_rate = if visible == 0 { 0.0 } else { filled as f64 / visible as f64 };
    let citation_present_rate = rate(cited, answered.len());
    let citation_valid_rate = rate(valid, answered.len());
    let conditional_rate = rate(suite.passed, suite.total);
    let mut below_floor = Vec::new();
    for (name, value, floor) in [
        ("fill_rate", fill_rate, floors.fill_rate),
        ("citation_present_rate", citation_present_rate, floors.citation_present_rate),
        ("citation_valid_rate", citation_valid_rate, floors.citation_valid_rate),
        ("conditional_suite", conditional_rate, floors.conditional_rate),
    ] {
        if value < floor {
            below_floor.push(format!("{name} {value:.4} < {floor}"));
        }
    }
    EvalReport {
        fill_rate,
        visible,
        filled,
        citation_present_rate,
        citation_valid_rate,
        type_conformity_rate: rate(typed.iter().filter(|t| **t).count(), typed.len()),
        conditional_suite: suite,
        mapping_accuracy: rate(mapped.iter().filter(|m| **m).count(), mapped.len()),
        floors,
        below_floor,
        questions,
    }
}
