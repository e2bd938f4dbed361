//! Canonical form schema: the field ontology every mapping and answer is
//! anchored to.
//!
//! A schema is a single JSON document (`{"version", "fields": [...]}`) with
//! strict key checking. Loading normalizes keywords and enforces the field
//! invariants; [`validate_value`] checks a candidate answer against one
//! field's type and format constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text;

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid field `{field_id}`: {reason}")]
    Validation { field_id: String, reason: String },
}

impl SchemaError {
    fn invalid(field_id: &str, reason: impl Into<String>) -> Self {
        SchemaError::Validation { field_id: field_id.to_owned(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataType {
    Text,
    LongText,
    Number,
    Date,
    Boolean,
    Enum,
    Phone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormatKind {
    DatePattern,
    NumericRange,
    Regex,
    None,
}

/// Expected input format of a field.
#[derive(Debug, Clone, PartialEq)]
pub enum FormatRule {
    DatePattern(DatePattern),
    NumericRange { min: Option<f64>, max: Option<f64> },
    Regex(String),
    None,
}

impl FormatRule {
    pub fn kind(&self) -> FormatKind {
        match self {
            FormatRule::DatePattern(_) => FormatKind::DatePattern,
            FormatRule::NumericRange { .. } => FormatKind::NumericRange,
            FormatRule::Regex(_) => FormatKind::Regex,
            FormatRule::None => FormatKind::None,
        }
    }

    /// Human-readable description used in retrieval queries and prompts.
    pub fn describe(&self, data_type: DataType) -> String {
        match self {
            FormatRule::DatePattern(p) => format!("date as {}", p.as_str()),
            FormatRule::NumericRange { min: Some(lo), max: Some(hi) } => {
                format!("number from {lo:.1} to {hi:.1}")
            }
            FormatRule::NumericRange { min: Some(lo), max: None } => format!("number of at least {lo}"),
            FormatRule::NumericRange { min: None, max: Some(hi) } => format!("number of at most {hi}"),
            FormatRule::NumericRange { .. } => "number".to_owned(),
            FormatRule::Regex(r) => format!("text matching {r}"),
            FormatRule::None => match data_type {
                DataType::Text => "short text".to_owned(),
                DataType::LongText => "verbatim excerpt".to_owned(),
                DataType::Number => "number".to_owned(),
                DataType::Date => format!("date as {DEFAULT_DATE_PATTERN}"),
                DataType::Boolean => "yes or no".to_owned(),
                DataType::Enum => "one of the listed options".to_owned(),
                DataType::Phone => "10 digit phone".to_owned(),
            },
        }
    }
}

pub const DEFAULT_DATE_PATTERN: &str = "MM/DD/YYYY";

/// Date layout built from `MM`, `DD` and `YYYY` tokens plus literal
/// separators, e.g. `MM/DD/YYYY` or `YYYY-MM-DD`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatePattern {
    raw: String,
    parts: Vec<DatePart>,
}

#[derive(Debug, Clone, PartialEq)]
enum DatePart {
    Month,
    Day,
    Year,
    Literal(char),
}

impl DatePattern {
    pub fn parse(raw: &str) -> Option<Self> {
        let mut parts = Vec::new();
        let mut rest = raw;
        while !rest.is_empty() {
            if let Some(r) = rest.strip_prefix("YYYY") {
                parts.push(DatePart::Year);
                rest = r;
            } else if let Some(r) = rest.strip_prefix("MM") {
                parts.push(DatePart::Month);
                rest = r;
            } else if let Some(r) = rest.strip_prefix("DD") {
                parts.push(DatePart::Day);
                rest = r;
            } else {
                let c = rest.chars().next()?;
                if c.is_alphanumeric() {
                    return None;
                }
                parts.push(DatePart::Literal(c));
                rest = &rest[c.len_utf8()..];
            }
        }
        let count = |p: &DatePart| parts.iter().filter(|q| *q == p).count();
        if count(&DatePart::Month) != 1 || count(&DatePart::Day) != 1 || count(&DatePart::Year) != 1 {
            return None;
        }
        Some(DatePattern { raw: raw.to_owned(), parts })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn format(&self, date: NaiveDate) -> String {
        use chrono::Datelike;
        let mut out = String::new();
        for part in &self.parts {
            match part {
                DatePart::Month => out.push_str(&format!("{:02}", date.month())),
                DatePart::Day => out.push_str(&format!("{:02}", date.day())),
                DatePart::Year => out.push_str(&format!("{:04}", date.year())),
                DatePart::Literal(c) => out.push(*c),
            }
        }
        out
    }

    /// Parses a value laid out exactly as this pattern; returns `None` for
    /// shape mismatches and impossible calendar dates.
    pub fn parse_value(&self, value: &str) -> Option<NaiveDate> {
        let mut rest = value;
        let (mut y, mut m, mut d) = (None, None, None);
        for part in &self.parts {
            let width = match part {
                DatePart::Year => 4,
                DatePart::Month | DatePart::Day => 2,
                DatePart::Literal(c) => {
                    rest = rest.strip_prefix(*c)?;
                    continue;
                }
            };
            if rest.len() < width || !rest.as_bytes()[..width].iter().all(u8::is_ascii_digit) {
                return None;
            }
            let n: u32 = rest[..width].parse().ok()?;
            rest = &rest[width..];
            match part {
                DatePart::Year => y = Some(n as i32),
                DatePart::Month => m = Some(n),
                DatePart::Day => d = Some(n),
                DatePart::Literal(_) => unreachable!(),
            }
        }
        if !rest.is_empty() {
            return None;
        }
        NaiveDate::from_ymd_opt(y?, m?, d?)
    }
}

impl Default for DatePattern {
    fn default() -> Self {
        DatePattern::parse(DEFAULT_DATE_PATTERN).expect("default pattern is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Predicate {
    Equals,
    NotEquals,
    In,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    Show,
    Hide,
    Require,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionRule {
    pub controller_id: String,
    pub predicate: Predicate,
    pub values: Vec<String>,
    pub effect: Effect,
}

impl ConditionRule {
    /// Evaluates the predicate against the controller's current value.
    /// An absent value never satisfies any predicate.
    pub fn fires(&self, controller_value: Option<&str>) -> bool {
        let Some(value) = controller_value.map(str::trim).filter(|v| !v.is_empty()) else {
            return false;
        };
        let eq = |v: &String| v.trim().eq_ignore_ascii_case(value);
        match self.predicate {
            Predicate::Equals => self.values.first().is_some_and(eq),
            Predicate::NotEquals => !self.values.first().is_some_and(eq),
            Predicate::In => self.values.iter().any(eq),
        }
    }
}

/// One entry of the canonical schema.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalField {
    pub id: String,
    pub intent: String,
    pub data_type: DataType,
    pub keywords: Vec<String>,
    pub format: FormatRule,
    pub enum_options: Vec<String>,
    pub conditions: Vec<ConditionRule>,
    pub provenance_policy: Vec<String>,
    pub char_limit: Option<usize>,
}

impl CanonicalField {
    /// Builds a field and checks its local invariants (everything except
    /// cross-field references, which need the whole schema).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        intent: impl Into<String>,
        data_type: DataType,
        keywords: Vec<String>,
        format: FormatRule,
        enum_options: Vec<String>,
        conditions: Vec<ConditionRule>,
        char_limit: Option<usize>,
    ) -> Result<Self, SchemaError> {
        let id = id.into();
        validate_id(&id)?;
        let keywords = normalized_keywords_of(&keywords);
        if keywords.is_empty() {
            return Err(SchemaError::invalid(&id, "keywords must be non-empty"));
        }
        if (data_type == DataType::Enum) != !enum_options.is_empty() {
            return Err(SchemaError::invalid(
                &id,
                if data_type == DataType::Enum {
                    "enum field is missing enum_options"
                } else {
                    "enum_options given for a non-enum field"
                },
            ));
        }
        if char_limit == Some(0) {
            return Err(SchemaError::invalid(&id, "char_limit must be positive"));
        }
        if let FormatRule::Regex(r) = &format {
            Regex::new(r).map_err(|e| SchemaError::invalid(&id, format!("bad regex: {e}")))?;
        }
        if let FormatRule::NumericRange { min: Some(lo), max: Some(hi) } = format {
            if lo > hi {
                return Err(SchemaError::invalid(&id, "numeric range min exceeds max"));
            }
        }
        for c in &conditions {
            if c.values.is_empty() {
                return Err(SchemaError::invalid(&id, "condition values must be non-empty"));
            }
            if c.controller_id == id {
                return Err(SchemaError::invalid(&id, "field cannot condition on itself"));
            }
        }
        Ok(CanonicalField {
            id,
            intent: intent.into(),
            data_type,
            keywords,
            format,
            enum_options,
            conditions,
            provenance_policy: Vec::new(),
            char_limit,
        })
    }

    pub fn with_provenance(mut self, policy: Vec<String>) -> Self {
        self.provenance_policy = policy;
        self
    }

    /// Keywords folded to lowercase, deduplicated, first occurrence kept.
    pub fn normalized_keywords(&self) -> Vec<String> {
        normalized_keywords_of(&self.keywords)
    }

    pub fn date_pattern(&self) -> DatePattern {
        match &self.format {
            FormatRule::DatePattern(p) => p.clone(),
            _ => DatePattern::default(),
        }
    }
}

/// Normalizes a raw keyword list: lowercase, punctuation folded, whitespace
/// collapsed, empties dropped, duplicates removed in first-seen order.
pub fn normalized_keywords_of(raw: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    raw.iter()
        .map(|k| text::normalize(k))
        .filter(|k| !k.is_empty() && seen.insert(k.clone()))
        .collect()
}

fn validate_id(id: &str) -> Result<(), SchemaError> {
    if id.is_empty() {
        return Err(SchemaError::invalid(id, "id must be non-empty"));
    }
    for seg in id.split('.') {
        if seg.is_empty() {
            return Err(SchemaError::invalid(id, "empty path segment"));
        }
        if seg.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
            return Err(SchemaError::invalid(id, format!("segment `{seg}` must be lowercase without whitespace")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CanonicalSchema {
    pub version: String,
    pub fields: BTreeMap<String, CanonicalField>,
}

impl CanonicalSchema {
    /// Assembles a schema from fields, enforcing uniqueness and reference
    /// integrity.
    pub fn from_fields(version: impl Into<String>, fields: Vec<CanonicalField>) -> Result<Self, SchemaError> {
        let mut map = BTreeMap::new();
        for field in fields {
            if map.contains_key(&field.id) {
                return Err(SchemaError::invalid(&field.id, "duplicate field id"));
            }
            map.insert(field.id.clone(), field);
        }
        for field in map.values() {
            for c in &field.conditions {
                if !map.contains_key(&c.controller_id) {
                    return Err(SchemaError::invalid(
                        &field.id,
                        format!("condition references unknown controller `{}`", c.controller_id),
                    ));
                }
            }
        }
        Ok(CanonicalSchema { version: version.into(), fields: map })
    }

    pub fn get(&self, id: &str) -> Option<&CanonicalField> {
        self.fields.get(id)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SchemaDoc::from(self)).expect("schema serializes")
    }
}

/// Parses and validates a schema document.
pub fn load_schema(bytes: &[u8]) -> Result<CanonicalSchema, SchemaError> {
    let doc: SchemaDoc = serde_json::from_slice(bytes)?;
    let fields = doc.fields.into_iter().map(FieldDoc::into_field).collect::<Result<Vec<_>, _>>()?;
    CanonicalSchema::from_fields(doc.version, fields)
}

// Wire format. Kept separate from the domain types so that the domain can
// encode "exactly the fields required by kind" in the type system.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDoc {
    version: String,
    fields: Vec<FieldDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldDoc {
    id: String,
    intent: String,
    data_type: DataType,
    keywords: Vec<String>,
    #[serde(default)]
    format: Option<FormatDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    enum_options: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    conditions: Vec<ConditionRule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    provenance_policy: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    char_limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormatDoc {
    kind: FormatKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    date_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    regex: Option<String>,
}

impl FormatDoc {
    fn into_rule(self, id: &str) -> Result<FormatRule, SchemaError> {
        let bad = |why: &str| Err(SchemaError::invalid(id, format!("format {:?}: {why}", self.kind)));
        let has_date = self.date_pattern.is_some();
        let has_range = self.min.is_some() || self.max.is_some();
        let has_regex = self.regex.is_some();
        match self.kind {
            FormatKind::DatePattern => {
                if has_range || has_regex {
                    return bad("only date_pattern is allowed");
                }
                let Some(raw) = &self.date_pattern else { return bad("date_pattern is required") };
                match DatePattern::parse(raw) {
                    Some(p) => Ok(FormatRule::DatePattern(p)),
                    None => bad("date_pattern needs exactly one MM, DD and YYYY"),
                }
            }
            FormatKind::NumericRange => {
                if has_date || has_regex {
                    return bad("only min/max are allowed");
                }
                if !has_range {
                    return bad("min or max is required");
                }
                Ok(FormatRule::NumericRange { min: self.min, max: self.max })
            }
            FormatKind::Regex => {
                if has_date || has_range {
                    return bad("only regex is allowed");
                }
                match self.regex {
                    Some(r) => Ok(FormatRule::Regex(r)),
                    None => bad("regex is required"),
                }
            }
            FormatKind::None => {
                if has_date || has_range || has_regex {
                    return bad("no parameters are allowed");
                }
                Ok(FormatRule::None)
            }
        }
    }

    fn from_rule(rule: &FormatRule) -> Option<Self> {
        let empty = FormatDoc { kind: rule.kind(), date_pattern: None, min: None, max: None, regex: None };
        match rule {
            FormatRule::None => None,
            FormatRule::DatePattern(p) => Some(FormatDoc { date_pattern: Some(p.as_str().to_owned()), ..empty }),
            FormatRule::NumericRange { min, max } => Some(FormatDoc { min: *min, max: *max, ..empty }),
            FormatRule::Regex(r) => Some(FormatDoc { regex: Some(r.clone()), ..empty }),
        }
    }
}

impl FieldDoc {
    fn into_field(self) -> Result<CanonicalField, SchemaError> {
        let format = match self.format {
            Some(f) => f.into_rule(&self.id)?,
            None => FormatRule::None,
        };
        Ok(CanonicalField::new(
            self.id,
            self.intent,
            self.data_type,
            self.keywords,
            format,
            self.enum_options,
            self.conditions,
            self.char_limit,
        )?
        .with_provenance(self.provenance_policy))
    }
}

impl From<&CanonicalSchema> for SchemaDoc {
    fn from(schema: &CanonicalSchema) -> Self {
        SchemaDoc {
            version: schema.version.clone(),
            fields: schema
                .fields
                .values()
                .map(|f| FieldDoc {
                    id: f.id.clone(),
                    intent: f.intent.clone(),
                    data_type: f.data_type,
                    keywords: f.keywords.clone(),
                    format: FormatDoc::from_rule(&f.format),
                    enum_options: f.enum_options.clone(),
                    conditions: f.conditions.clone(),
                    provenance_policy: f.provenance_policy.clone(),
                    char_limit: f.char_limit,
                })
                .collect(),
        }
    }
}

/// The first rule a value violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Type,
    Range,
    Pattern,
    Enum,
    CharLimit,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Type => "type",
            Rule::Range => "range",
            Rule::Pattern => "pattern",
            Rule::Enum => "enum",
            Rule::CharLimit => "char_limit",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violation: Option<Violation>,
}

impl ValidationReport {
    fn pass() -> Self {
        ValidationReport { passed: true, violation: None }
    }

    fn fail(rule: Rule, message: impl Into<String>) -> Self {
        ValidationReport { passed: false, violation: Some(Violation { rule, message: message.into() }) }
    }
}

pub const BOOLEAN_VALUES: &[&str] = &["Yes", "No", "True", "False"];

/// Checks `value` against the field's type shape, range, pattern, enum
/// membership and character limit, reporting the first violation.
pub fn validate_value(field: &CanonicalField, value: &str) -> ValidationReport {
    let trimmed = value.trim();
    match field.data_type {
        DataType::Number => match parse_number(trimmed) {
            None => return ValidationReport::fail(Rule::Type, format!("`{trimmed}` is not a number")),
            Some(n) => {
                if let FormatRule::NumericRange { min, max } = field.format {
                    if min.is_some_and(|lo| n < lo) || max.is_some_and(|hi| n > hi) {
                        return ValidationReport::fail(
                            Rule::Range,
                            format!("{n} outside [{}, {}]", fmt_bound(min), fmt_bound(max)),
                        );
                    }
                }
            }
        },
        DataType::Date => {
            let pattern = field.date_pattern();
            if pattern.parse_value(trimmed).is_none() {
                return ValidationReport::fail(Rule::Pattern, format!("`{trimmed}` is not a date as {}", pattern.as_str()));
            }
        }
        DataType::Boolean => {
            if !BOOLEAN_VALUES.iter().any(|b| b.eq_ignore_ascii_case(trimmed)) {
                return ValidationReport::fail(Rule::Type, format!("`{trimmed}` is not yes/no"));
            }
        }
        DataType::Enum => {
            if !field.enum_options.iter().any(|o| o == trimmed) {
                return ValidationReport::fail(Rule::Enum, format!("`{trimmed}` is not an option"));
            }
        }
        DataType::Phone => {
            let digits = trimmed.chars().filter(char::is_ascii_digit).count();
            let shape_ok = trimmed.chars().all(|c| c.is_ascii_digit() || " ()-.+".contains(c));
            if !shape_ok || digits != 10 {
                return ValidationReport::fail(Rule::Type, format!("`{trimmed}` is not a 10-digit phone number"));
            }
        }
        DataType::Text | DataType::LongText => {
            if trimmed.is_empty() {
                return ValidationReport::fail(Rule::Type, "empty text");
            }
            if let Some(limit) = field.char_limit {
                let n = value.chars().count();
                if n > limit {
                    return ValidationReport::fail(Rule::CharLimit, format!("{n} characters exceeds {limit}"));
                }
            }
        }
    }
    if let FormatRule::Regex(r) = &field.format {
        // Regexes are validated at construction time.
        let re = Regex::new(r).expect("regex validated on load");
        if !re.is_match(trimmed) {
            return ValidationReport::fail(Rule::Pattern, format!("`{trimmed}` does not match {r}"));
        }
    }
    ValidationReport::pass()
}

fn fmt_bound(b: Option<f64>) -> String {
    b.map_or_else(|| "-".to_owned(), |v| v.to_string())
}

/// Strict numeric parse: optional sign, digits, optional fraction.
pub fn parse_number(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let mut parts = body.splitn(2, '.');
    let int = parts.next()?;
    let frac = parts.next();
    let digits_ok = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok(int) || frac.is_some_and(|f| !digits_ok(f)) {
        return None;
    }
    s.parse().ok()
}
