//! Three-tier mapping of observed portal form fields onto canonical fields.
//!
//! Tier 1 matches schema keywords against the field's own text, tier 2
//! retries with section context from enclosing containers, and tier 3 scores
//! every field intent by a blend of Jaro-Winkler and word overlap, accepting
//! the best only above a threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::schema::CanonicalSchema;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InputKind {
    #[default]
    TextInput,
    TextArea,
    Select,
    Radio,
    Checkbox,
    DateInput,
}

/// A container element enclosing a form field.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextNode {
    pub tag: String,
    pub id_attr: Option<String>,
    pub class_list: Vec<String>,
    pub heading_text: Option<String>,
}

/// A form field as observed on a portal page.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldDescriptor {
    pub element_id: Option<String>,
    pub name_attr: Option<String>,
    pub label_text: Option<String>,
    pub placeholder: Option<String>,
    pub aria_label: Option<String>,
    pub nearby_text: Vec<String>,
    pub input_kind: InputKind,
    pub options: Vec<String>,
    /// Enclosing containers, outermost first.
    pub ancestors: Vec<ContextNode>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DescriptorError {
    #[error("field descriptor carries no label, placeholder, aria label, name or nearby text")]
    NoText,
    #[error("context node with empty tag")]
    EmptyTag,
}

impl FieldDescriptor {
    pub fn labelled(label: &str) -> Self {
        FieldDescriptor { label_text: Some(label.to_owned()), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        let non_empty = |o: &Option<String>| o.as_deref().is_some_and(|s| !s.trim().is_empty());
        let has_text = non_empty(&self.label_text)
            || non_empty(&self.placeholder)
            || non_empty(&self.aria_label)
            || non_empty(&self.name_attr)
            || self.nearby_text.iter().any(|t| !t.trim().is_empty());
        if !has_text {
            return Err(DescriptorError::NoText);
        }
        if self.ancestors.iter().any(|a| a.tag.trim().is_empty()) {
            return Err(DescriptorError::EmptyTag);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Direct,
    Contextual,
    Similarity,
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub field_id: Option<String>,
    pub tier: Tier,
    pub confidence: f64,
    pub evidence: String,
}

impl MappingResult {
    fn mapped(field_id: &str, tier: Tier, confidence: f64, evidence: String) -> Self {
        debug_assert!(tier != Tier::Unmapped);
        MappingResult { field_id: Some(field_id.to_owned()), tier, confidence, evidence }
    }

    pub fn unmapped(evidence: impl Into<String>) -> Self {
        MappingResult { field_id: None, tier: Tier::Unmapped, confidence: 0.0, evidence: evidence.into() }
    }

    pub fn is_mapped(&self) -> bool {
        self.tier != Tier::Unmapped
    }
}

pub const CONTEXTUAL_CONFIDENCE: f64 = 0.9;

/// Tier-3 acceptance threshold for the 0.5/0.5 blend. On the bundled labelled
/// set, misspelled labels score 0.74 and up against their own intent while
/// unrelated labels top out near 0.61.
pub const SIMILARITY_THRESHOLD: f64 = 0.70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    pub similarity_threshold: f64,
    pub jw_weight: f64,
    pub overlap_weight: f64,
    pub cache_enabled: bool,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig { similarity_threshold: SIMILARITY_THRESHOLD, jw_weight: 0.5, overlap_weight: 0.5, cache_enabled: true }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("weights must be non-negative and sum to 1 (got {0} + {1})")]
    Weights(f64, f64),
    #[error("similarity threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
}

impl MappingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (a, b) = (self.jw_weight, self.overlap_weight);
        if a < 0.0 || b < 0.0 || ((a + b) - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Weights(a, b));
        }
        let t = self.similarity_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(ConfigError::Threshold(t));
        }
        Ok(())
    }
}

/// Joins label, placeholder, aria label, the split name attribute and nearby
/// text, then normalizes.
pub fn aggregate_field_text(d: &FieldDescriptor) -> String {
    let mut parts: Vec<String> = Vec::new();
    parts.extend(d.label_text.iter().cloned());
    parts.extend(d.placeholder.iter().cloned());
    parts.extend(d.aria_label.iter().cloned());
    parts.extend(d.name_attr.iter().map(|n| text::split_identifier(n)));
    parts.extend(d.nearby_text.iter().cloned());
    text::normalize(&parts.join(" "))
}

/// Finds the field whose keyword occurs as whole words in `text`.
///
/// The longest matching keyword wins; equal lengths go to the smaller id.
pub fn tier1_direct(text: &str, schema: &CanonicalSchema) -> Option<MappingResult> {
    best_keyword_match(text, schema, 0).map(|(id, kw)| {
        MappingResult::mapped(&id, Tier::Direct, 1.0, format!("keyword `{kw}` in \"{text}\""))
    })
}

/// Keyword match restricted to occurrences that end inside the last
/// `own_words` words of `text` (the field's own text when context has been
/// prefixed). `own_words == 0` disables the restriction.
fn best_keyword_match(text: &str, schema: &CanonicalSchema, own_words: usize) -> Option<(String, String)> {
    if text.is_empty() {
        return None;
    }
    let tokens: Vec<&str> = text.split(' ').collect();
    let own_start = tokens.len().saturating_sub(own_words);
    let mut best: Option<(usize, &str, &str)> = None;
    // BTreeMap iteration is id-ascending, so a strict `>` keeps the smaller id on ties.
    for (id, field) in &schema.fields {
        for kw in &field.keywords {
            let kw_tokens: Vec<&str> = kw.split(' ').collect();
            let hit = tokens.windows(kw_tokens.len()).enumerate().any(|(start, w)| {
                w == kw_tokens.as_slice() && (own_words == 0 || start + kw_tokens.len() > own_start)
            });
            if hit && best.is_none_or(|(len, _, _)| kw.len() > len) {
                best = Some((kw.len(), id, kw));
            }
        }
    }
    best.map(|(_, id, kw)| (id.to_owned(), kw.to_owned()))
}

/// Retries keyword matching with each enclosing container's heading, id and
/// class tokens prefixed to the field text, nearest container first. A match
/// must extend into the field's own words, so a section heading alone never
/// decides the mapping.
pub fn tier2_contextual(d: &FieldDescriptor, schema: &CanonicalSchema) -> Option<MappingResult> {
    let own = aggregate_field_text(d);
    if own.is_empty() {
        return None;
    }
    let own_words = own.split(' ').count();
    for node in d.ancestors.iter().rev() {
        for context in context_sources(node) {
            let combined = format!("{context} {own}");
            if let Some((id, kw)) = best_keyword_match(&combined, schema, own_words) {
                let evidence = format!("keyword `{kw}` in context \"{combined}\" (<{}>)", node.tag);
                return Some(MappingResult::mapped(&id, Tier::Contextual, CONTEXTUAL_CONFIDENCE, evidence));
            }
        }
    }
    None
}

fn context_sources(node: &ContextNode) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(h) = &node.heading_text {
        out.push(text::normalize(h));
    }
    if let Some(id) = &node.id_attr {
        out.push(text::normalize(&text::split_identifier(id)));
    }
    for class in &node.class_list {
        out.push(text::normalize(&text::split_identifier(class)));
    }
    out.retain(|s| !s.is_empty());
    out
}

pub const JW_PREFIX_SCALE: f64 = 0.1;
pub const JW_MAX_PREFIX: usize = 4;

/// Jaro similarity over Unicode scalar values.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == *ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_matched).filter(|(_, &m)| m).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_matched).filter(|(_, &m)| m).map(|(c, _)| c);
    let half_transpositions = a_seq.zip(b_seq).filter(|(x, y)| x != y).count();
    let m = matches as f64;
    let t = (half_transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler similarity with prefix scale 0.1 and a 4-character prefix cap.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    let prefix = a.chars().zip(b.chars()).take(JW_MAX_PREFIX).take_while(|(x, y)| x == y).count();
    j + prefix as f64 * JW_PREFIX_SCALE * (1.0 - j)
}

/// Overlap coefficient of normalized word sets:
/// `|A ∩ B| / max(1, min(|A|, |B|))`.
pub fn word_overlap(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = text::words(a).into_iter().collect();
    let sb: BTreeSet<String> = text::words(b).into_iter().collect();
    let shared = sa.intersection(&sb).count();
    shared as f64 / sa.len().min(sb.len()).max(1) as f64
}

fn similarity(text: &str, intent: &str, cfg: &MappingConfig) -> f64 {
    let intent = text::normalize(intent);
    cfg.jw_weight * jaro_winkler(text, &intent) + cfg.overlap_weight * word_overlap(text, &intent)
}

/// Per-field tier-3 scores, keyed by field id.
pub fn similarity_scores(text: &str, schema: &CanonicalSchema, cfg: &MappingConfig) -> BTreeMap<String, f64> {
    schema.fields.iter().map(|(id, f)| (id.clone(), similarity(text, &f.intent, cfg))).collect()
}

/// Scores every field intent and returns the argmax when it clears the
/// acceptance threshold.
pub fn tier3_similarity(text: &str, schema: &CanonicalSchema, cfg: &MappingConfig) -> Option<MappingResult> {
    let mut best: Option<(&str, f64)> = None;
    for (id, field) in &schema.fields {
        let score = similarity(text, &field.intent, cfg);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((id, score));
        }
    }
    let (id, score) = best?;
    (score >= cfg.similarity_threshold).then(|| {
        MappingResult::mapped(id, Tier::Similarity, score, format!("intent similarity {score:.4} for \"{text}\""))
    })
}

/// Diagnostic dump of one mapping decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingTrace {
    pub tier: Tier,
    pub score_per_field: BTreeMap<String, f64>,
}

#[derive(Debug, Default)]
pub struct TierCounters {
    pub tier1: AtomicUsize,
    pub tier2: AtomicUsize,
    pub tier3: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TierCalls {
    pub tier1: usize,
    pub tier2: usize,
    pub tier3: usize,
}

/// Session-scoped memo of mapping decisions.
#[derive(Debug, Default)]
pub struct MappingCache {
    entries: RwLock<HashMap<(String, u64), MappingResult>>,
}

impl MappingCache {
    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &(String, u64)) -> Option<MappingResult> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    fn insert(&self, key: (String, u64), value: MappingResult) {
        self.entries.write().expect("cache lock").insert(key, value);
    }
}

fn ancestor_fingerprint(d: &FieldDescriptor) -> u64 {
    use std::hash::{Hash, Hasher};
    // DefaultHasher::new() uses fixed keys, so fingerprints are stable within a process.
    let mut h = std::collections::hash_map::DefaultHasher::new();
    d.ancestors.hash(&mut h);
    h.finish()
}

/// Mapping engine bound to one schema and configuration.
#[derive(Debug)]
pub struct FieldMapper {
    schema: Arc<CanonicalSchema>,
    cfg: MappingConfig,
    cache: MappingCache,
    counters: TierCounters,
}

impl FieldMapper {
    pub fn new(schema: Arc<CanonicalSchema>, cfg: MappingConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(FieldMapper { schema, cfg, cache: MappingCache::default(), counters: TierCounters::default() })
    }

    pub fn schema(&self) -> &CanonicalSchema {
        &self.schema
    }

    pub fn config(&self) -> &MappingConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &MappingCache {
        &self.cache
    }

    pub fn tier_calls(&self) -> TierCalls {
        TierCalls {
            tier1: self.counters.tier1.load(Ordering::Relaxed),
            tier2: self.counters.tier2.load(Ordering::Relaxed),
            tier3: self.counters.tier3.load(Ordering::Relaxed),
        }
    }

    /// Cascades tier 1, 2, 3; falls back to `Unmapped`.
    pub fn map_field(&self, d: &FieldDescriptor) -> MappingResult {
        let text = aggregate_field_text(d);
        let key = (text.clone(), ancestor_fingerprint(d));
        if self.cfg.cache_enabled {
            if let Some(hit) = self.cache.get(&key) {
                return hit;
            }
        }
        let result = self.cascade(d, &text);
        if self.cfg.cache_enabled {
            self.cache.insert(key, result.clone());
        }
        result
    }

    fn cascade(&self, d: &FieldDescriptor, text: &str) -> MappingResult {
        self.counters.tier1.fetch_add(1, Ordering::Relaxed);
        if let Some(r) = tier1_direct(text, &self.schema) {
            return r;
        }
        self.counters.tier2.fetch_add(1, Ordering::Relaxed);
        if let Some(r) = tier2_contextual(d, &self.schema) {
            return r;
        }
        self.counters.tier3.fetch_add(1, Ordering::Relaxed);
        if let Some(r) = tier3_similarity(text, &self.schema, &self.cfg) {
            return r;
        }
        MappingResult::unmapped(format!("no tier matched \"{text}\""))
    }

    /// Maps without touching the cache and reports every tier-3 score.
    pub fn trace(&self, d: &FieldDescriptor) -> (MappingResult, MappingTrace) {
        let text = aggregate_field_text(d);
        let result = self.cascade(d, &text);
        let trace = MappingTrace {
            tier: result.tier,
            score_per_field: similarity_scores(&text, &self.schema, &self.cfg),
        };
        (result, trace)
    }
}

/// Stateless convenience wrapper: maps one descriptor with an optional
/// caller-owned cache.
pub fn map_field(
    d: &FieldDescriptor,
    schema: &CanonicalSchema,
    cfg: &MappingConfig,
    cache: Option<&MappingCache>,
) -> MappingResult {
    let text = aggregate_field_text(d);
    let key = (text.clone(), ancestor_fingerprint(d));
    if let Some(hit) = cache.filter(|_| cfg.cache_enabled).and_then(|c| c.get(&key)) {
        return hit;
    }
    let result = tier1_direct(&text, schema)
        .or_else(|| tier2_contextual(d, schema))
        .or_else(|| tier3_similarity(&text, schema, cfg))
        .unwrap_or_else(|| MappingResult::unmapped(format!("no tier matched \"{text}\"")));
    if let Some(c) = cache.filter(|_| cfg.cache_enabled) {
        c.insert(key, result.clone());
    }
    result
}
