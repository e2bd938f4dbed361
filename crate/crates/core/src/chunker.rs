//! Boundary-respecting, overlapping chunking with provenance metadata.
//!
//! Tokens are whitespace-delimited words. A chunk may end after token `i`
//! when one of these holds, strongest first:
//! the next line is a `#` heading (section), a line break follows (paragraph),
//! or the token ends in `.`, `!` or `?` (sentence).

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::StructuredText;
use crate::text::{normalize, contains_phrase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceType {
    Official,
    Faq,
    Community,
    Personal,
}

impl SourceType {
    pub const PUBLIC_TIERS: [SourceType; 3] = [SourceType::Official, SourceType::Faq, SourceType::Community];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Education,
    Activity,
    Award,
    Personal,
    Testing,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub text: String,
    pub token_count: usize,
    pub institution: String,
    pub source_url: String,
    pub page_title: String,
    pub section_heading: Option<String>,
    pub source_type: SourceType,
    pub crawl_timestamp: DateTime<Utc>,
    pub chunk_index: usize,
    pub category: Option<Category>,
    /// User id for personal documents; public chunks have none.
    #[serde(default)]
    pub owner: Option<String>,
    /// Set when a single block longer than `max_tokens` had to be kept whole.
    #[serde(default)]
    pub oversized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig { min_tokens: 300, max_tokens: 500, overlap_tokens: 50 }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("chunk config must satisfy 0 <= overlap < min <= max (got {0:?})")]
pub struct ChunkConfigError(pub ChunkConfig);

impl ChunkConfig {
    pub fn new(min_tokens: usize, max_tokens: usize, overlap_tokens: usize) -> Result<Self, ChunkConfigError> {
        let c = ChunkConfig { min_tokens, max_tokens, overlap_tokens };
        c.validate().map(|_| c)
    }

    pub fn validate(&self) -> Result<(), ChunkConfigError> {
        if self.overlap_tokens < self.min_tokens && self.min_tokens <= self.max_tokens {
            Ok(())
        } else {
            Err(ChunkConfigError(*self))
        }
    }
}

/// Provenance shared by every chunk of one source document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub institution: String,
    pub page_id: String,
    pub source_url: String,
    pub page_title: String,
    pub source_type: SourceType,
    pub crawl_timestamp: DateTime<Utc>,
    pub owner: Option<String>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Boundary {
    Sentence = 1,
    Paragraph = 2,
    Section = 3,
}

#[derive(Debug, Clone)]
struct Token {
    start: usize,
    end: usize,
    /// Strongest boundary directly after this token.
    after: Option<Boundary>,
    /// Heading text when this token opens a heading line.
    heading: Option<String>,
}

fn heading_text(line: &str) -> Option<String> {
    let t = line.trim_start();
    let hashes = t.bytes().take_while(|&b| b == b'#').count();
    (hashes > 0 && t[hashes..].starts_with(char::is_whitespace)).then(|| t[hashes..].trim().to_owned())
}

fn scan(text: &str) -> Vec<Token> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let heading = heading_text(line);
        let mut first = true;
        let mut offset = 0;
        for word in line.split_whitespace() {
            let rel = line[offset..].find(word).expect("word comes from line") + offset;
            offset = rel + word.len();
            if first {
                if let Some(prev) = tokens.last_mut() {
                    prev.after = Some(if heading.is_some() { Boundary::Section } else { Boundary::Paragraph });
                }
            }
            let sentence = word.ends_with(['.', '!', '?']);
            tokens.push(Token {
                start: pos + rel,
                end: pos + offset,
                after: sentence.then_some(Boundary::Sentence),
                heading: if first { heading.clone() } else { None },
            });
            first = false;
        }
        pos += line.len();
    }
    tokens
}

/// Splits `text` into chunks; the text is NFC-normalized first so offsets
/// and token counts agree.
pub fn chunk_text(text: &str, cfg: &ChunkConfig, meta: &SourceMeta) -> Vec<Chunk> {
    let text: String = text.nfc().collect();
    let tokens = scan(&text);
    let n = tokens.len();
    let mut spans: Vec<(usize, usize, bool)> = Vec::new();
    let mut s = 0;
    while s < n {
        if n - s <= cfg.max_tokens {
            spans.push((s, n, false));
            break;
        }
        // Ending at `b` means the boundary after token b-1.
        let window = (s + cfg.min_tokens).max(s + 1)..=(s + cfg.max_tokens);
        let best = window.filter_map(|b| tokens[b - 1].after.map(|k| (k, b))).max();
        let (b, oversized) = match best {
            Some((_, b)) => (b, false),
            None => {
                let b = (s + cfg.max_tokens + 1..=n).find(|&b| b == n || tokens[b - 1].after.is_some()).unwrap_or(n);
                (b, true)
            }
        };
        spans.push((s, b, oversized));
        if b == n {
            break;
        }
        s = b - cfg.overlap_tokens;
    }

    spans
        .into_iter()
        .enumerate()
        .map(|(i, (s, e, oversized))| {
            let body = text[tokens[s].start..tokens[e - 1].end].to_owned();
            let section_heading = tokens[..=s].iter().rev().find_map(|t| t.heading.clone());
            Chunk {
                id: format!("doc_{}_{}_{}", meta.institution, meta.page_id, i),
                token_count: e - s,
                category: Some(assign_category(&body)),
                text: body,
                institution: meta.institution.clone(),
                source_url: meta.source_url.clone(),
                page_title: meta.page_title.clone(),
                section_heading,
                source_type: meta.source_type,
                crawl_timestamp: meta.crawl_timestamp,
                chunk_index: i,
                owner: meta.owner.clone(),
                oversized,
            }
        })
        .collect()
}

pub fn chunk_structured(st: &StructuredText, cfg: &ChunkConfig, meta: &SourceMeta) -> Vec<Chunk> {
    chunk_text(&st.render(), cfg, meta)
}

/// Chunks a document a user uploaded. Chunk ids are namespaced by owner so
/// two users' documents with the same name never collide.
pub fn chunk_personal(user: &str, name: &str, text: &str, cfg: &ChunkConfig, uploaded: DateTime<Utc>) -> Vec<Chunk> {
    let page_id = crate::corpus::crawl::sanitize(name);
    let meta = SourceMeta {
        institution: format!("user-{}", crate::corpus::crawl::sanitize(user)),
        page_id,
        source_url: format!("file://{user}/{name}"),
        page_title: name.to_owned(),
        source_type: SourceType::Personal,
        crawl_timestamp: uploaded,
        owner: Some(user.to_owned()),
    };
    chunk_text(text, cfg, &meta)
}

const CATEGORY_RULES: [(Category, &[&str]); 5] = [
    (Category::Education, &["course", "courses", "credits", "gpa", "grade", "grades", "semester", "transcript"]),
    (Category::Award, &["award", "awards", "certificate", "honor", "honors", "prize"]),
    (Category::Activity, &["activities", "activity", "club", "clubs", "team", "volunteer", "volunteering"]),
    (Category::Testing, &["act", "ap", "exam", "ib", "sat", "score", "scores"]),
    (Category::Personal, &["address", "birth", "email", "name", "phone"]),
];

/// First matching rule wins, in the order of `CATEGORY_RULES`.
pub fn assign_category(text: &str) -> Category {
    let norm = normalize(text);
    CATEGORY_RULES
        .iter()
        .find(|(_, kws)| kws.iter().any(|k| contains_phrase(&norm, k)))
        .map_or(Category::Other, |(c, _)| *c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> SourceMeta {
        SourceMeta {
            institution: "uni.edu".into(),
            page_id: "p1".into(),
            source_url: "https://uni.edu/".into(),
            page_title: "Home".into(),
            source_type: SourceType::Official,
            crawl_timestamp: DateTime::from_timestamp(0, 0).unwrap(),
            owner: None,
        }
    }

    fn cfg(min: usize, max: usize, ov: usize) -> ChunkConfig {
        ChunkConfig::new(min, max, ov).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("a b  c"), ["a", "b", "c"]);
        assert!(tokenize("").is_empty());
        let thousand = vec!["w"; 1000].join(" ");
        assert_eq!(tokenize(&thousand).len(), 1000);
    }

    #[test]
    fn short_text_is_one_chunk() {
        let text = vec!["word"; 100].join(" ");
        let cs = chunk_text(&text, &ChunkConfig::default(), &meta());
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].token_count, 100);
        assert_eq!(cs[0].id, "doc_uni.edu_p1_0");
    }

    #[test]
    fn exactly_max_is_one_chunk() {
        let text = vec!["Done."; 500].join("\n");
        assert_eq!(chunk_text(&text, &ChunkConfig::default(), &meta()).len(), 1);
    }

    #[test]
    fn nine_hundred_tokens_sentence_every_ten() {
        let sentence = "one two three four five six seven eight nine ten.";
        let text = vec![sentence; 90].join(" ");
        let cs = chunk_text(&text, &ChunkConfig::default(), &meta());
        // Hand-simulated: window [300, 500] has sentence ends at every 10th
        // token, the latest is 500; the next chunk starts at 450 and the
        // remaining 450 tokens fit.
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].token_count, 500);
        assert_eq!(cs[1].token_count, 450);
        let t0 = tokenize(&cs[0].text);
        let t1 = tokenize(&cs[1].text);
        assert_eq!(&t0[450..], &t1[..50]);
    }

    #[test]
    fn section_beats_later_sentence() {
        let mut text = vec!["s."; 320].join(" ");
        text.push_str("\n# Next\n");
        text.push_str(&vec!["t."; 300].join(" "));
        let cs = chunk_text(&text, &ChunkConfig::default(), &meta());
        assert_eq!(cs[0].token_count, 320);
        assert_eq!(cs[1].section_heading, None);
        assert!(cs[1].text.contains("# Next"));
    }

    #[test]
    fn heading_is_tracked() {
        let text = "# Education\nCumulative GPA: 3.72\n## Courses\nAlgebra II";
        let cs = chunk_text(text, &ChunkConfig::default(), &meta());
        assert_eq!(cs[0].section_heading.as_deref(), Some("Education"));
    }

    #[test]
    fn indivisible_block_is_flagged() {
        let text = vec!["x"; 700].join(" ");
        let cs = chunk_text(&text, &ChunkConfig::default(), &meta());
        assert_eq!(cs.len(), 1);
        assert!(cs[0].oversized);
        assert_eq!(cs[0].token_count, 700);
    }

    #[test]
    fn config_invariants() {
        assert!(ChunkConfig::new(300, 500, 50).is_ok());
        assert!(ChunkConfig::new(50, 500, 50).is_err());
        assert!(ChunkConfig::new(600, 500, 50).is_err());
    }

    #[test]
    fn categories() {
        assert_eq!(assign_category("AP Chemistry score 5"), Category::Testing);
        assert_eq!(assign_category("Science Fair Award, 2023"), Category::Award);
        assert_eq!(assign_category("lorem ipsum"), Category::Other);
        assert_eq!(assign_category("Cumulative GPA: 3.72"), Category::Education);
        assert_eq!(assign_category("Robotics club captain"), Category::Activity);
        assert_eq!(assign_category("Phone: 555-123-4567"), Category::Personal);
        assert_eq!(assign_category("Honor roll for grades"), Category::Education);
    }

    #[test]
    fn jsonl_field_names() {
        let c = &chunk_text("Hello there.", &ChunkConfig::default(), &meta())[0];
        let v: serde_json::Value = serde_json::to_value(c).unwrap();
        for k in ["id", "text", "token_count", "institution", "source_url", "page_title", "section_heading", "source_type", "crawl_timestamp", "chunk_index", "category"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["source_type"], "Official");
    }

    fn arb_doc() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            6 => "[a-z]{1,6}".prop_map(|w| w),
            1 => "[a-z]{1,6}[.!?]".prop_map(|w| w),
        ];
        let sep = prop_oneof![8 => Just(" ".to_string()), 1 => Just("\n".to_string()), 1 => Just("\n## ".to_string())];
        proptest::collection::vec((word, sep), 0..1200)
            .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect::<String>())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn chunking_properties(doc in arb_doc(), min in 20usize..80, extra in 0usize..60, ov in 0usize..20) {
            let c = cfg(min, min + extra, ov.min(min - 1));
            let chunks = chunk_text(&doc, &c, &meta());
            let source = tokenize(&doc);
            let mut rebuilt: Vec<String> = Vec::new();
            for (i, ch) in chunks.iter().enumerate() {
                let toks = tokenize(&ch.text);
                prop_assert_eq!(toks.len(), ch.token_count);
                prop_assert_eq!(ch.chunk_index, i);
                let skip = if i == 0 { 0 } else { c.overlap_tokens };
                rebuilt.extend(toks[skip..].iter().cloned());
                if !ch.oversized {
                    prop_assert!(ch.token_count <= c.max_tokens);
                }
                if i + 1 < chunks.len() {
                    prop_assert!(ch.token_count >= c.min_tokens.min(source.len()));
                    let end = doc.find(&ch.text).map(|p| p + ch.text.len()).unwrap();
                    let last = ch.text.chars().last().unwrap();
                    let next_is_break = doc[end..].chars().take_while(|c| *c == ' ' || *c == '\n').any(|c| c == '\n');
                    prop_assert!(matches!(last, '.' | '!' | '?') || next_is_break);
                }
            }
            prop_assert_eq!(rebuilt, source);
            prop_assert_eq!(chunk_text(&doc, &c, &meta()), chunks);
        }
    }
}
