//! Bundled evaluation fixtures: the reference schema, the conditional-logic
//! suite, sample forms and seed lists.
//!
//! The reference schema is authored for this project; no published field
//! inventory exists to copy from.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::chunker::{chunk_personal, Chunk, ChunkConfig};
use crate::condlogic::{build_dependency_graph, evaluate_visibility, on_field_change, CondError, FormState, Visibility};
use crate::fieldmap::{FieldDescriptor, Tier};
use crate::index::LexicalIndex;
use crate::schema::{load_schema, CanonicalSchema, SchemaError};
use crate::synthgen::{render_package_text, StudentPackage};
use crate::answer::FormItem;

pub const REFERENCE_SCHEMA: &str = include_str!("../fixtures/reference_schema.json");
pub const CONDITIONAL_SUITE: &str = include_str!("../fixtures/conditional_suite.json");
pub const GENERAL_FORM: &str = include_str!("../fixtures/general_form.json");
pub const SCHOOL_FORMS: &str = include_str!("../fixtures/school_forms.json");
pub const MAPPING_LABELS: &str = include_str!("../fixtures/mapping_labels.json");
pub const INSTITUTION_SEEDS_CSV: &str = include_str!("../fixtures/seeds.csv");
pub const STUDENTS_CSV: &str = include_str!("../fixtures/students.csv");

pub fn reference_schema() -> CanonicalSchema {
    load_schema(REFERENCE_SCHEMA.as_bytes()).expect("bundled schema is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub field: String,
    /// Empty clears the field.
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Expected {
    pub visibility: BTreeMap<String, Visibility>,
    pub required: BTreeMap<String, bool>,
}

/// A schema fragment, an edit script and the state expected afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCase {
    pub name: String,
    pub fields: Vec<serde_json::Value>,
    pub edits: Vec<Edit>,
    pub expected: Expected,
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Cond(#[from] CondError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub mismatches: Vec<String>,
}

impl ConditionalCase {
    pub fn schema(&self) -> Result<CanonicalSchema, SchemaError> {
        let doc = serde_json::json!({"version": format!("case:{}", self.name), "fields": self.fields});
        load_schema(doc.to_string().as_bytes())
    }

    /// Replays the edit script one change at a time and compares the final
    /// state against the expectation. The incremental result is also checked
    /// against a full re-evaluation.
    pub fn run(&self) -> Result<CaseResult, CaseError> {
        let schema = self.schema()?;
        let graph = build_dependency_graph(&schema)?;
        let mut state = evaluate_visibility(&graph, &FormState::default(), &schema);
        for e in &self.edits {
            state = on_field_change(&graph, &state, &schema, &e.field, &e.value)?.state;
        }
        let mut mismatches = Vec::new();
        let full = evaluate_visibility(&graph, &state, &schema);
        if full.visibility != state.visibility || full.required != state.required {
            mismatches.push("incremental state differs from full evaluation".to_owned());
        }
        for (id, want) in &self.expected.visibility {
            let got = state.visibility.get(id);
            if got != Some(want) {
                mismatches.push(format!("{id}: visibility {got:?}, expected {want:?}"));
            }
        }
        for (id, want) in &self.expected.required {
            let got = state.required.get(id);
            if got != Some(want) {
                mismatches.push(format!("{id}: required {got:?}, expected {want:?}"));
            }
        }
        Ok(CaseResult { name: self.name.clone(), passed: mismatches.is_empty(), mismatches })
    }
}

#[derive(Deserialize)]
struct Suite {
    cases: Vec<ConditionalCase>,
}

pub fn conditional_cases() -> Vec<ConditionalCase> {
    serde_json::from_str::<Suite>(CONDITIONAL_SUITE).expect("bundled suite parses").cases
}

/// A form question with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureItem {
    pub question: String,
    /// Defaults to a field labelled with the question.
    #[serde(default)]
    pub descriptor: Option<FieldDescriptor>,
    /// Empty when the field should stay unmapped.
    pub expected_field: String,
    #[serde(default)]
    pub expected_tier: Option<Tier>,
    pub answerable: bool,
}

impl FixtureItem {
    pub fn form_item(&self) -> FormItem {
        match &self.descriptor {
            Some(d) => FormItem { descriptor: d.clone(), question: self.question.clone() },
            None => FormItem::labelled(&self.question),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureForm {
    pub name: String,
    pub items: Vec<FixtureItem>,
}

impl FixtureForm {
    pub fn form_items(&self) -> Vec<FormItem> {
        self.items.iter().map(FixtureItem::form_item).collect()
    }

    pub fn answerable_count(&self) -> usize {
        self.items.iter().filter(|i| i.answerable).count()
    }

    /// The same form restricted to answerable questions.
    pub fn answerable_only(&self) -> FixtureForm {
        FixtureForm {
            name: format!("{} (answerable)", self.name),
            items: self.items.iter().filter(|i| i.answerable).cloned().collect(),
        }
    }
}

pub fn general_form() -> FixtureForm {
    serde_json::from_str(GENERAL_FORM).expect("bundled general form parses")
}

#[derive(Deserialize)]
struct Forms {
    forms: Vec<FixtureForm>,
}

pub fn school_forms() -> Vec<FixtureForm> {
    serde_json::from_str::<Forms>(SCHOOL_FORMS).expect("bundled school forms parse").forms
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingLabel {
    pub text: String,
    pub field: String,
}

#[derive(Deserialize)]
struct Labels {
    labels: Vec<MappingLabel>,
    negatives: Vec<String>,
}

fn labels() -> Labels {
    serde_json::from_str(MAPPING_LABELS).expect("bundled labels parse")
}

/// Misspelled or paraphrased labels no keyword catches, with their field.
pub fn mapping_labels() -> Vec<MappingLabel> {
    labels().labels
}

/// Labels that correspond to no schema field.
pub fn mapping_negatives() -> Vec<String> {
    labels().negatives
}

/// Upload time stamped on fixture documents.
pub fn fixture_time() -> DateTime<Utc> {
    DateTime::from_timestamp(1_700_000_000, 0).expect("valid timestamp")
}

/// Chunks of every rendered document in a package, owned by `user`.
pub fn package_chunks(pkg: &StudentPackage, user: &str) -> Vec<Chunk> {
    render_package_text(pkg)
        .into_iter()
        .flat_map(|(name, text)| chunk_personal(user, &name, &text, &ChunkConfig::default(), fixture_time()))
        .collect()
}

pub fn package_index(pkg: &StudentPackage, user: &str) -> LexicalIndex {
    let mut index = LexicalIndex::new();
    index.index_chunks(package_chunks(pkg, user)).expect("package chunk ids are unique");
    index
}
