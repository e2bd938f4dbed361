//! Form files read by `fill` and the fill report it writes.
//!
//! A form file is either one form or `{"forms": [...]}`. Each form lists
//! its questions, optionally with a full field descriptor and the field the
//! question is expected to map to, plus `known` answers that drive the
//! schema's conditions before anything is filled:
//!
//! ```json
//! {"name": "Transfer form",
//!  "known": {"user.citizenship.us_citizen": "No"},
//!  "items": [{"question": "Cumulative GPA", "expected_field": "user.academics.gpa"}]}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use groundform_core::answer::{FillReport, FormItem};
use groundform_core::fieldmap::FieldDescriptor;
use groundform_core::fixtures::{self, FixtureForm};
use groundform_core::schema::CanonicalSchema;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormSpec {
    pub name: String,
    #[serde(default)]
    pub known: BTreeMap<String, String>,
    pub items: Vec<FormSpecItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormSpecItem {
    pub question: String,
    #[serde(default)]
    pub descriptor: Option<FieldDescriptor>,
    /// Empty string: expected to stay unmapped.
    #[serde(default)]
    pub expected_field: Option<String>,
    #[serde(default)]
    pub answerable: Option<bool>,
}

impl FormSpecItem {
    pub fn form_item(&self) -> FormItem {
        match &self.descriptor {
            Some(d) => FormItem { descriptor: d.clone(), question: self.question.clone() },
            None => FormItem::labelled(&self.question),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FormFile {
    Many { forms: Vec<FormSpec> },
    One(FormSpec),
}

impl From<FixtureForm> for FormSpec {
    fn from(f: FixtureForm) -> Self {
        FormSpec {
            name: f.name,
            known: BTreeMap::new(),
            items: f
                .items
                .into_iter()
                .map(|i| FormSpecItem {
                    question: i.question,
                    descriptor: i.descriptor,
                    expected_field: Some(i.expected_field),
                    answerable: Some(i.answerable),
                })
                .collect(),
        }
    }
}

pub fn builtin_forms(name: &str) -> Option<Vec<FormSpec>> {
    match name {
        "general" => Some(vec![fixtures::general_form().into()]),
        "schools" => Some(fixtures::school_forms().into_iter().map(Into::into).collect()),
        _ => None,
    }
}

pub fn parse_forms(json: &str) -> Result<Vec<FormSpec>, serde_json::Error> {
    Ok(match serde_json::from_str(json)? {
        FormFile::Many { forms } => forms,
        FormFile::One(f) => vec![f],
    })
}

/// Problems that make a form unusable with `schema`.
pub fn check_against(form: &FormSpec, schema: &CanonicalSchema) -> Vec<String> {
    let mut problems = Vec::new();
    for id in form.known.keys() {
        if schema.get(id).is_none() {
            problems.push(format!("{}: known value for unknown field `{id}`", form.name));
        }
    }
    for (i, item) in form.items.iter().enumerate() {
        if let Some(id) = item.expected_field.as_deref().filter(|s| !s.is_empty()) {
            if schema.get(id).is_none() {
                problems.push(format!("{} item {}: expected field `{id}` is not in the schema", form.name, i + 1));
            }
        }
        if let Err(e) = item.form_item().descriptor.validate() {
            problems.push(format!("{} item {}: {e}", form.name, i + 1));
        }
    }
    problems
}

/// Ground truth carried from the form into the report for `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemTruth {
    pub expected_field: Option<String>,
    pub answerable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormRun {
    pub name: String,
    pub truth: Vec<ItemTruth>,
    pub report: FillReport,
    /// `no-visible-fields` when every field was hidden.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRun {
    pub schema_version: String,
    pub index: String,
    pub index_fingerprint: String,
    pub user: Option<String>,
    pub forms: Vec<FormRun>,
}
