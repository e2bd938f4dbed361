//! Provisional rewrites of selected text and their word-level diff.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use groundform_core::model::sentences;

/// Longest selection accepted by the edit endpoint, in bytes.
pub const MAX_EDIT_BYTES: usize = 8_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Shorten,
    Formalize,
    Simplify,
    RemoveFiller,
    FixCapitalization,
}

impl Preset {
    pub const ALL: [Preset; 5] =
        [Preset::Shorten, Preset::Formalize, Preset::Simplify, Preset::RemoveFiller, Preset::FixCapitalization];

    /// Matches free-text instructions such as "make it shorter" or "more formal please".
    pub fn from_instruction(instruction: &str) -> Option<Preset> {
        let i = instruction.to_lowercase();
        let has = |words: &[&str]| words.iter().any(|w| i.contains(w));
        if has(&["short", "concise", "trim"]) {
            Some(Preset::Shorten)
        } else if has(&["formal", "professional"]) {
            Some(Preset::Formalize)
        } else if has(&["simpl", "plain"]) {
            Some(Preset::Simplify)
        } else if has(&["filler", "tighten"]) {
            Some(Preset::RemoveFiller)
        } else if has(&["capital", "grammar"]) {
            Some(Preset::FixCapitalization)
        } else {
            None
        }
    }

    pub fn apply(self, text: &str) -> String {
        match self {
            Preset::Shorten => shorten(text),
            Preset::Formalize => formalize(text),
            Preset::Simplify => simplify(text),
            Preset::RemoveFiller => remove_filler(text),
            Preset::FixCapitalization => fix_capitalization(text),
        }
    }
}

/// Produces a revision for an instruction.
pub trait Reviser: Send + Sync {
    fn revise(&self, text: &str, instruction: &str) -> String;
}

/// Offline reviser: applies the matching preset, or returns the text unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleReviser;

impl Reviser for RuleReviser {
    fn revise(&self, text: &str, instruction: &str) -> String {
        Preset::from_instruction(instruction).map_or_else(|| text.to_owned(), |p| p.apply(text))
    }
}

/// Keeps each sentence up to its first comma.
fn shorten(text: &str) -> String {
    sentences(text)
        .into_iter()
        .map(|s| match s.split_once(',') {
            Some((head, _)) => {
                let end = s.chars().last().filter(|c| matches!(c, '.' | '!' | '?')).unwrap_or('.');
                format!("{}{end}", head.trim_end())
            }
            None => s.to_owned(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

static CONTRACTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b([a-z]+)'(t|re|m|ll|ve|d|s)\b").unwrap());

fn formalize(text: &str) -> String {
    CONTRACTION
        .replace_all(text, |c: &regex::Captures| {
            let (stem, tail) = (&c[1], c[2].to_lowercase());
            let lower = stem.to_lowercase();
            let expanded = match (lower.as_str(), tail.as_str()) {
                ("can", "t") => "cannot".to_owned(),
                ("won", "t") => "will not".to_owned(),
                ("shan", "t") => "shall not".to_owned(),
                (s, "t") if s.ends_with('n') => format!("{} not", &stem[..stem.len() - 1]),
                (_, "re") => format!("{stem} are"),
                (_, "m") => format!("{stem} am"),
                (_, "ll") => format!("{stem} will"),
                (_, "ve") => format!("{stem} have"),
                (_, "d") => format!("{stem} would"),
                ("it" | "that" | "there" | "he" | "she" | "what" | "who" | "here", "s") => format!("{stem} is"),
                _ => return c[0].to_owned(),
            };
            match_case(stem, &expanded)
        })
        .into_owned()
}

const PLAIN_WORDS: [(&str, &str); 10] = [
    ("in order to", "to"),
    ("utilize", "use"),
    ("approximately", "about"),
    ("commence", "begin"),
    ("demonstrate", "show"),
    ("facilitate", "help"),
    ("numerous", "many"),
    ("additionally", "also"),
    ("subsequently", "later"),
    ("endeavor", "try"),
];

static PLAIN: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    PLAIN_WORDS.iter().map(|(from, to)| (Regex::new(&format!(r"(?i)\b{from}\b")).unwrap(), *to)).collect()
});

fn simplify(text: &str) -> String {
    PLAIN.iter().fold(text.to_owned(), |acc, (re, to)| {
        re.replace_all(&acc, |c: &regex::Captures| match_case(&c[0], to)).into_owned()
    })
}

static FILLER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(really|very|just|basically|actually|literally|quite|totally) ").unwrap());

fn remove_filler(text: &str) -> String {
    let out = FILLER.replace_all(text, "");
    let mut chars = out.chars();
    // A sentence that started with a filler word keeps its capital.
    match (text.chars().next(), chars.next()) {
        (Some(f), Some(c)) if f.is_uppercase() && c.is_lowercase() => c.to_uppercase().chain(chars).collect(),
        _ => out.into_owned(),
    }
}

static SENTENCE_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|[.!?]\s+)([a-z])").unwrap());
static LONE_I: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bi\b").unwrap());

fn fix_capitalization(text: &str) -> String {
    let s = SENTENCE_START.replace_all(text, |c: &regex::Captures| format!("{}{}", &c[1], c[2].to_uppercase()));
    LONE_I.replace_all(&s, "I").into_owned()
}

fn match_case(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut c = replacement.chars();
        c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
    } else {
        replacement.to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffOp {
    Keep,
    Del,
    Ins,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSpan {
    pub op: DiffOp,
    pub text: String,
}

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+|[^\s]+").unwrap());

/// Words and whitespace runs, so spans concatenate back to the input.
pub fn diff_tokens(text: &str) -> Vec<&str> {
    TOKEN.find_iter(text).map(|m| m.as_str()).collect()
}

/// Token-level LCS alignment of `old` against `new`. At a change,
/// deletions come first.
pub fn align<'a>(old: &'a str, new: &'a str) -> Vec<(DiffOp, &'a str)> {
    let a = diff_tokens(old);
    let b = diff_tokens(new);
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..].iter().rev().zip(b[prefix..].iter().rev()).take_while(|(x, y)| x == y).count();
    let (ma, mb) = (&a[prefix..a.len() - suffix], &b[prefix..b.len() - suffix]);

    // lcs[i * w + j] = LCS length of ma[i..] and mb[j..]
    let w = mb.len() + 1;
    let mut lcs = vec![0u32; (ma.len() + 1) * w];
    for i in (0..ma.len()).rev() {
        for j in (0..mb.len()).rev() {
            lcs[i * w + j] = if ma[i] == mb[j] { lcs[(i + 1) * w + j + 1] + 1 } else { lcs[(i + 1) * w + j].max(lcs[i * w + j + 1]) };
        }
    }

    let mut out: Vec<(DiffOp, &str)> = a[..prefix].iter().map(|t| (DiffOp::Keep, *t)).collect();
    let (mut i, mut j) = (0, 0);
    while i < ma.len() || j < mb.len() {
        if i < ma.len() && j < mb.len() && ma[i] == mb[j] {
            out.push((DiffOp::Keep, ma[i]));
            i += 1;
            j += 1;
        } else if i < ma.len() && (j == mb.len() || lcs[(i + 1) * w + j] >= lcs[i * w + j + 1]) {
            out.push((DiffOp::Del, ma[i]));
            i += 1;
        } else {
            out.push((DiffOp::Ins, mb[j]));
            j += 1;
        }
    }
    out.extend(a[a.len() - suffix..].iter().map(|t| (DiffOp::Keep, *t)));
    out
}

/// `align` with adjacent same-op tokens merged into spans. Keep and del
/// spans concatenate to `old`, keep and ins spans to `new`.
pub fn lcs_diff(old: &str, new: &str) -> Vec<DiffSpan> {
    let mut out: Vec<DiffSpan> = Vec::new();
    for (op, t) in align(old, new) {
        match out.last_mut() {
            Some(last) if last.op == op => last.text.push_str(t),
            _ => out.push(DiffSpan { op, text: t.to_owned() }),
        }
    }
    out
}

pub fn side(spans: &[DiffSpan], skip: DiffOp) -> String {
    spans.iter().filter(|s| s.op != skip).map(|s| s.text.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shorten_drops_trailing_clauses() {
        let s = "I led the robotics club, which met twice a week. We won regionals!";
        assert_eq!(Preset::Shorten.apply(s), "I led the robotics club. We won regionals!");
    }

    #[test]
    fn formalize_expands_contractions() {
        assert_eq!(
            Preset::Formalize.apply("I can't stop, it's fun and we're close. Don't worry, I'd go. The club's goal."),
            "I cannot stop, it is fun and we are close. Do not worry, I would go. The club's goal."
        );
        assert_eq!(Preset::Formalize.apply("Won't"), "Will not");
    }

    #[test]
    fn simplify_and_filler() {
        assert_eq!(Preset::Simplify.apply("Utilize numerous tools in order to commence."), "Use many tools to begin.");
        assert_eq!(Preset::RemoveFiller.apply("Really I just love it very much."), "I love it much.");
    }

    #[test]
    fn capitalization() {
        assert_eq!(Preset::FixCapitalization.apply("i ran. then i won! ok"), "I ran. Then I won! Ok");
    }

    #[test]
    fn instruction_matching() {
        assert_eq!(Preset::from_instruction("Make it shorter"), Some(Preset::Shorten));
        assert_eq!(Preset::from_instruction("more formal please"), Some(Preset::Formalize));
        assert_eq!(Preset::from_instruction("translate to French"), None);
        assert_eq!(RuleReviser.revise("Keep me.", "translate to French"), "Keep me.");
    }

    #[test]
    fn shorten_diff_has_deletion() {
        let old = "I led the robotics club, which met twice a week.";
        let spans = lcs_diff(old, &Preset::Shorten.apply(old));
        assert!(spans.iter().any(|s| s.op == DiffOp::Del));
        assert_eq!(spans[0], DiffSpan { op: DiffOp::Keep, text: "I led the robotics ".into() });
    }

    #[test]
    fn identical_text_is_all_keep() {
        let spans = lcs_diff("same text here", "same text here");
        assert_eq!(spans, vec![DiffSpan { op: DiffOp::Keep, text: "same text here".into() }]);
        assert!(lcs_diff("", "").is_empty());
    }

    /// Textbook LCS length by full dynamic programming.
    fn lcs_len(a: &[&str], b: &[&str]) -> usize {
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
            }
        }
        t[a.len()][b.len()]
    }

    proptest! {
        #[test]
        fn diff_reconstructs_both_sides(old in "[abc ]{0,30}", new in "[abc ]{0,30}") {
            let spans = lcs_diff(&old, &new);
            prop_assert_eq!(side(&spans, DiffOp::Ins), old.clone());
            prop_assert_eq!(side(&spans, DiffOp::Del), new.clone());
            let kept = align(&old, &new).iter().filter(|(op, _)| *op == DiffOp::Keep).count();
            prop_assert_eq!(kept, lcs_len(&diff_tokens(&old), &diff_tokens(&new)));
        }
    }
}
