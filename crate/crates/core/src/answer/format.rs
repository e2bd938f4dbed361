//! Coerces drafted answers into field-ready values.

use std::sync::LazyLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{levenshtein, strip_markers, Draft};
use crate::schema::{validate_value, CanonicalField, DataType};
use crate::text::{contains_phrase, normalize, words};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormattedAnswer {
    pub field_id: String,
    pub value: String,
    /// Rule names; empty means the value validates.
    pub violations: Vec<String>,
    pub truncated: bool,
}

/// Which date to keep when an answer mentions several.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DateChoice {
    #[default]
    Earliest,
    Latest,
}

pub fn format_answer(draft: &Draft, field: &CanonicalField) -> FormattedAnswer {
    format_answer_with(draft, field, DateChoice::default())
}

pub fn format_answer_with(draft: &Draft, field: &CanonicalField, dates: DateChoice) -> FormattedAnswer {
    let mut out =
        FormattedAnswer { field_id: field.id.clone(), value: String::new(), violations: Vec::new(), truncated: false };
    if draft.refused {
        out.violations.push("refused".into());
        return out;
    }
    let plain = strip_markers(&draft.answer_text);
    let body = if field.data_type == DataType::LongText { plain } else { strip_label(&plain) };
    let coerced = match field.data_type {
        DataType::Date => coerce_date(&body, field, dates),
        DataType::Number => first_number(&body),
        DataType::Enum => match match_option(&body, &field.enum_options) {
            Some(o) => Some(o),
            None => {
                out.violations.push("no_option_match".into());
                None
            }
        },
        DataType::Boolean => coerce_bool(&body),
        DataType::Phone => coerce_phone(&body),
        DataType::Text | DataType::LongText => {
            let (v, cut) = match field.char_limit {
                Some(limit) => truncate_words(&body, limit),
                None => (body.clone(), false),
            };
            out.truncated = cut;
            Some(v)
        }
    };
    out.value = coerced.unwrap_or(body);
    if out.violations.is_empty() {
        if let Some(v) = validate_value(field, &out.value).violation {
            out.violations.push(v.rule.name().into());
        }
    }
    out
}

/// Drops a short leading `Label: ` such as `Cumulative GPA: `.
fn strip_label(text: &str) -> String {
    if let Some((label, rest)) = text.split_once(": ") {
        let rest = rest.trim();
        if !rest.is_empty() && label.split_whitespace().count() <= 6 && !label.contains(['.', '!', '?']) {
            return rest.to_owned();
        }
    }
    text.trim().to_owned()
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?\$?(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?").expect("static regex"));

fn first_number(text: &str) -> Option<String> {
    let m = NUMBER.find(text)?;
    Some(m.as_str().replace(['$', ','], ""))
}

const MONTHS: [&str; 12] =
    ["january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november", "december"];

static NUMERIC_US: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d{1,2})[/.-](\d{1,2})[/.-](\d{4})\b").expect("static regex"));
static ISO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d{4})-(\d{1,2})-(\d{1,2})\b").expect("static regex"));
static MONTH_FIRST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b([a-z]{3,9})\.?\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})\b").expect("static regex")
});
static DAY_FIRST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d{1,2})(?:st|nd|rd|th)?\s+([a-z]{3,9})\.?,?\s+(\d{4})\b").expect("static regex")
});

fn month_number(name: &str) -> Option<u32> {
    let lower = name.to_lowercase();
    MONTHS
        .iter()
        .position(|m| *m == lower || (lower.len() >= 3 && m.starts_with(&lower) && (lower.len() == 3 || lower == "sept")))
        .map(|i| i as u32 + 1)
}

/// Every calendar date mentioned in `text`, in order of appearance.
pub fn find_dates(text: &str) -> Vec<NaiveDate> {
    let num = |s: &str| s.parse::<u32>().ok();
    let mut found: Vec<(usize, NaiveDate)> = Vec::new();
    for c in NUMERIC_US.captures_iter(text) {
        if let (Some(m), Some(d), Some(y)) = (num(&c[1]), num(&c[2]), num(&c[3])) {
            found.extend(NaiveDate::from_ymd_opt(y as i32, m, d).map(|dt| (c.get(0).unwrap().start(), dt)));
        }
    }
    for c in ISO.captures_iter(text) {
        if let (Some(y), Some(m), Some(d)) = (num(&c[1]), num(&c[2]), num(&c[3])) {
            found.extend(NaiveDate::from_ymd_opt(y as i32, m, d).map(|dt| (c.get(0).unwrap().start(), dt)));
        }
    }
    for c in MONTH_FIRST.captures_iter(text) {
        if let (Some(m), Some(d), Some(y)) = (month_number(&c[1]), num(&c[2]), num(&c[3])) {
            found.extend(NaiveDate::from_ymd_opt(y as i32, m, d).map(|dt| (c.get(0).unwrap().start(), dt)));
        }
    }
    for c in DAY_FIRST.captures_iter(text) {
        if let (Some(d), Some(m), Some(y)) = (num(&c[1]), month_number(&c[2]), num(&c[3])) {
            found.extend(NaiveDate::from_ymd_opt(y as i32, m, d).map(|dt| (c.get(0).unwrap().start(), dt)));
        }
    }
    found.sort();
    found.into_iter().map(|(_, d)| d).collect()
}

fn coerce_date(text: &str, field: &CanonicalField, choice: DateChoice) -> Option<String> {
    let dates = find_dates(text);
    let pick = match choice {
        DateChoice::Earliest => dates.iter().min(),
        DateChoice::Latest => dates.iter().max(),
    }?;
    Some(field.date_pattern().format(*pick))
}

fn coerce_bool(text: &str) -> Option<String> {
    for w in words(text) {
        match w.as_str() {
            "yes" | "true" | "y" => return Some("Yes".into()),
            "no" | "false" | "n" | "not" | "never" | "none" => return Some("No".into()),
            _ => {}
        }
    }
    None
}

fn coerce_phone(text: &str) -> Option<String> {
    let mut digits: String = text.chars().filter(char::is_ascii_digit).collect();
    if digits.len() == 11 && digits.starts_with('1') {
        digits.remove(0);
    }
    (digits.len() == 10).then(|| format!("{}-{}-{}", &digits[..3], &digits[3..6], &digits[6..]))
}

/// Picks the enum option an answer refers to: exact match ignoring case,
/// then whole-word containment (longest option wins), then the closest
/// option within edit distance ceil(len / 3). Distance also considers the
/// answer as word-wise abbreviations, so `Comp Sci` is 0 from
/// `Computer Science`.
pub fn match_option(answer: &str, options: &[String]) -> Option<String> {
    let a = normalize(answer);
    if a.is_empty() {
        return None;
    }
    if let Some(o) = options.iter().find(|o| normalize(o) == a) {
        return Some(o.clone());
    }
    let contained = options.iter().filter(|o| contains_phrase(&a, &normalize(o))).max_by_key(|o| normalize(o).len());
    if let Some(o) = contained {
        return Some(o.clone());
    }
    let mut best: Option<(usize, &String)> = None;
    for o in options {
        let n = normalize(o);
        let d = levenshtein(&a, &n).min(abbreviation_distance(&a, &n));
        let bound = n.chars().count().div_ceil(3);
        if d <= bound && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, o));
        }
    }
    best.map(|(_, o)| o.clone())
}

fn abbreviation_distance(answer: &str, option: &str) -> usize {
    let aw: Vec<&str> = answer.split(' ').collect();
    let ow: Vec<&str> = option.split(' ').collect();
    if aw.len() != ow.len() {
        return usize::MAX;
    }
    let truncated: Vec<String> =
        aw.iter().zip(&ow).map(|(a, o)| o.chars().take(a.chars().count().max(1)).collect()).collect();
    levenshtein(answer, &truncated.join(" "))
}

/// Cuts at a word boundary so the result has at most `limit` characters.
/// A single over-long first word is cut mid-word.
pub fn truncate_words(text: &str, limit: usize) -> (String, bool) {
    if text.chars().count() <= limit {
        return (text.to_owned(), false);
    }
    let mut out = String::new();
    for w in text.split_whitespace() {
        let extra = if out.is_empty() { 0 } else { 1 } + w.chars().count();
        if out.chars().count() + extra > limit {
            break;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    if out.is_empty() {
        out = text.chars().take(limit).collect();
    }
    (out, true)
}
