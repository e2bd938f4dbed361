//! End-to-end form filling: map, gate on visibility, retrieve, synthesize,
//! check citations, format.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::citations::{validate_citations, CitationReport, DEFAULT_RELEVANCE_THRESHOLD};
use super::format::{format_answer_with, DateChoice, FormattedAnswer};
use super::{construct_query, synthesize, Draft};
use crate::chunker::{Chunk, SourceType};
use crate::condlogic::{build_dependency_graph, evaluate_visibility, CondError, FormState};
use crate::fieldmap::{ConfigError, FieldDescriptor, FieldMapper, MappingConfig, Tier};
use crate::index::{tiered_retrieve, LexicalIndex, RetrievalRequest, Retriever, DEFAULT_TAU};
use crate::model::{ModelClient, ModelError};
use crate::schema::{CanonicalField, CanonicalSchema, DataType};
use crate::text::{contains_phrase, normalize};

/// Upper bound on suggestions for a multi-valued field.
pub const MAX_CANDIDATES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormItem {
    pub descriptor: FieldDescriptor,
    pub question: String,
}

impl FormItem {
    pub fn labelled(question: &str) -> Self {
        FormItem { descriptor: FieldDescriptor::labelled(question), question: question.to_owned() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FillConfig {
    pub top_k: usize,
    pub relevance_threshold: f64,
    pub tau: f64,
    pub mapping: MappingConfig,
    pub date_choice: DateChoice,
    /// Scope for personal documents; without it only public tiers are searched.
    pub user: Option<String>,
    /// Also consult public tiers when the user's documents have no hit.
    pub include_public: bool,
}

impl Default for FillConfig {
    fn default() -> Self {
        FillConfig {
            top_k: 5,
            relevance_threshold: DEFAULT_RELEVANCE_THRESHOLD,
            tau: DEFAULT_TAU,
            mapping: MappingConfig::default(),
            date_choice: DateChoice::Earliest,
            user: None,
            include_public: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FillError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Conditions(#[from] CondError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldStatus {
    Filled,
    Refused,
    Unmapped,
    Violation,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldOutcome {
    pub question: String,
    pub field_id: Option<String>,
    pub tier: Tier,
    pub status: FieldStatus,
    pub draft: Option<Draft>,
    pub formatted: Option<FormattedAnswer>,
    pub citations: Option<CitationReport>,
}

impl FieldOutcome {
    pub fn value(&self) -> Option<&str> {
        self.formatted.as_ref().filter(|_| self.status == FieldStatus::Filled).map(|f| f.value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillReport {
    /// One outcome per form item, in form order.
    pub fields: Vec<FieldOutcome>,
    pub visible: usize,
    pub filled: usize,
    /// Filled over visible; none when nothing is visible.
    pub fill_rate: Option<f64>,
    pub retrieval_requests: usize,
}

impl FillReport {
    pub fn count(&self, status: FieldStatus) -> usize {
        self.fields.iter().filter(|f| f.status == status).count()
    }
}

/// Fills a form against the index.
///
/// Fields are answered in dependency order so that values filled for
/// controllers (`known` values take precedence) decide the visibility of
/// their dependents. Hidden fields issue no retrieval.
pub fn fill_form(
    form: &[FormItem],
    known: &FormState,
    index: &LexicalIndex,
    schema: &CanonicalSchema,
    model: &dyn ModelClient,
    cfg: &FillConfig,
) -> Result<FillReport, FillError> {
    let mapper = FieldMapper::new(Arc::new(schema.clone()), cfg.mapping.clone())?;
    let graph = build_dependency_graph(schema)?;
    let rank: BTreeMap<&str, usize> = graph.topo_order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mappings: Vec<_> = form.iter().map(|item| mapper.map_field(&item.descriptor)).collect();
    let mut order: Vec<usize> = (0..form.len()).collect();
    order.sort_by_key(|&i| mappings[i].field_id.as_deref().and_then(|id| rank.get(id).copied()).unwrap_or(usize::MAX));

    let mut state = known.clone();
    let mut outcomes: Vec<Option<FieldOutcome>> = vec![None; form.len()];
    let mut requests = 0;
    for i in order {
        let item = &form[i];
        let mapping = &mappings[i];
        let mut outcome = FieldOutcome {
            question: item.question.clone(),
            field_id: mapping.field_id.clone(),
            tier: mapping.tier,
            status: FieldStatus::Unmapped,
            draft: None,
            formatted: None,
            citations: None,
        };
        let Some(field) = mapping.field_id.as_deref().and_then(|id| schema.get(id)) else {
            outcomes[i] = Some(outcome);
            continue;
        };
        let visibility = evaluate_visibility(&graph, &state, schema);
        if !visibility.is_visible(&field.id) {
            outcome.status = FieldStatus::Hidden;
            outcomes[i] = Some(outcome);
            continue;
        }
        let (chunks, issued) = retrieve(field, &item.question, index, cfg);
        requests += issued;
        let draft = synthesize(&item.question, field, &chunks, model)?;
        let report = validate_citations(&draft, index, cfg.relevance_threshold);
        outcome.status = if draft.refused {
            FieldStatus::Refused
        } else {
            let formatted = format_answer_with(&draft, field, cfg.date_choice);
            let status = if field.data_type == DataType::LongText && !verbatim_in(&draft, &chunks) {
                FieldStatus::Refused
            } else if !formatted.violations.is_empty() {
                FieldStatus::Violation
            } else {
                FieldStatus::Filled
            };
            if status == FieldStatus::Filled && !known.values.contains_key(&field.id) {
                state.values.insert(field.id.clone(), formatted.value.clone());
            }
            outcome.formatted = Some(formatted);
            status
        };
        outcome.draft = Some(draft);
        outcome.citations = Some(report);
        outcomes[i] = Some(outcome);
    }
    let fields: Vec<FieldOutcome> = outcomes.into_iter().map(|o| o.expect("every item visited")).collect();
    let visible = fields.iter().filter(|f| f.status != FieldStatus::Hidden).count();
    let filled = fields.iter().filter(|f| f.status == FieldStatus::Filled).count();
    let fill_rate = (visible > 0).then(|| filled as f64 / visible as f64);
    Ok(FillReport { fields, visible, filled, fill_rate, retrieval_requests: requests })
}

/// Retrieves evidence for one field. Returns the chunks and the number of
/// retrieval requests issued.
pub fn retrieve(field: &CanonicalField, question: &str, index: &dyn Retriever, cfg: &FillConfig) -> (Vec<Chunk>, usize) {
    let query = construct_query(field, question);
    let mut issued = 0;
    if let Some(user) = &cfg.user {
        issued += 1;
        let req = RetrievalRequest::new(&query, cfg.top_k).scoped(user).only(&[SourceType::Personal]);
        let hits = index.search(&req);
        if !hits.is_empty() || !cfg.include_public {
            return (hits.into_iter().map(|h| h.chunk).collect(), issued);
        }
    }
    issued += 1;
    let mut req = RetrievalRequest::new(&query, cfg.top_k);
    req.user_scope = cfg.user.clone();
    req.source_filter = Some(SourceType::PUBLIC_TIERS.into_iter().collect());
    (tiered_retrieve(index, &req, cfg.tau).into_iter().map(|h| h.chunk).collect(), issued)
}

fn verbatim_in(draft: &Draft, chunks: &[Chunk]) -> bool {
    let needle = normalize(&draft.plain_text());
    chunks.iter().any(|c| draft.citations.contains(&c.id) && contains_phrase(&normalize(&c.text), &needle))
}

/// Fields whose id ends in `.list` hold several values, e.g. activities.
pub fn is_multi_valued(field: &CanonicalField) -> bool {
    field.id.ends_with(".list")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: String,
    pub draft: Draft,
    pub source_type: SourceType,
    pub violations: Vec<String>,
}

/// Suggestions for one field. Single-valued fields get at most one
/// candidate; multi-valued fields get one per distinct supporting chunk, up
/// to `MAX_CANDIDATES`.
pub fn suggest_candidates(
    field: &CanonicalField,
    question: &str,
    index: &LexicalIndex,
    model: &dyn ModelClient,
    cfg: &FillConfig,
) -> Result<Vec<Candidate>, ModelError> {
    let (chunks, _) = retrieve(field, question, index, cfg);
    let groups: Vec<&[Chunk]> = if is_multi_valued(field) {
        chunks.iter().map(std::slice::from_ref).collect()
    } else {
        vec![chunks.as_slice()]
    };
    let mut out: Vec<Candidate> = Vec::new();
    for group in groups {
        if out.len() == MAX_CANDIDATES {
            break;
        }
        let draft = synthesize(question, field, group, model)?;
        if draft.refused {
            continue;
        }
        if field.data_type == DataType::LongText && !verbatim_in(&draft, group) {
            continue;
        }
        let formatted = format_answer_with(&draft, field, cfg.date_choice);
        if out.iter().any(|c| c.value == formatted.value) {
            continue;
        }
        let source_type = draft
            .citations
            .first()
            .and_then(|id| group.iter().find(|c| &c.id == id))
            .map_or(SourceType::Personal, |c| c.source_type);
        out.push(Candidate { value: formatted.value, draft, source_type, violations: formatted.violations });
    }
    Ok(out)
}
