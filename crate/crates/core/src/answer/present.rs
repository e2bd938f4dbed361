//! Citation-aware presentation of a draft for the UI.

use serde::{Deserialize, Serialize};

use super::Draft;
use crate::chunker::SourceType;
use crate::index::LexicalIndex;
use crate::model::sentences;
use crate::text::{contains_phrase, normalize};

const SNIPPET_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentedCitation {
    pub n: usize,
    pub chunk_id: String,
    pub source_type: Option<SourceType>,
    pub source_url: Option<String>,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPresentation {
    pub answer_text: String,
    pub citations: Vec<PresentedCitation>,
    /// Distinct source URLs, most authoritative first.
    pub sources: Vec<String>,
}

pub fn present_answer(draft: &Draft, index: &LexicalIndex) -> AnswerPresentation {
    let answer = normalize(&draft.plain_text());
    let citations: Vec<PresentedCitation> = draft
        .citations
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let chunk = index.get(id);
            PresentedCitation {
                n: i + 1,
                chunk_id: id.clone(),
                source_type: chunk.map(|c| c.source_type),
                source_url: chunk.map(|c| c.source_url.clone()),
                snippet: chunk.map_or_else(String::new, |c| snippet(&c.text, &answer)),
            }
        })
        .collect();
    let mut ranked: Vec<(SourceType, usize, &str)> = citations
        .iter()
        .filter_map(|c| Some((c.source_type?, c.n, c.source_url.as_deref()?)))
        .collect();
    ranked.sort();
    let mut sources: Vec<String> = Vec::new();
    for (_, _, url) in ranked {
        if !sources.iter().any(|s| s == url) {
            sources.push(url.to_owned());
        }
    }
    AnswerPresentation { answer_text: draft.answer_text.clone(), citations, sources }
}

/// The sentence holding the answer, else the opening of the chunk.
fn snippet(text: &str, answer: &str) -> String {
    let hit = sentences(text).into_iter().find(|s| contains_phrase(&normalize(s), answer) || contains_phrase(answer, &normalize(s)));
    let base = hit.unwrap_or(text);
    let mut out: String = base.chars().take(SNIPPET_CHARS).collect();
    if base.chars().count() > SNIPPET_CHARS {
        out.push_str("...");
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::test_chunk;

    #[test]
    fn official_sources_first_and_snippets() {
        let mut i = LexicalIndex::new();
        i.index_chunks(vec![
            test_chunk("m1", "Students say the deadline is January 5.", SourceType::Community, None),
            test_chunk("o1", "Overview.\nThe deadline is January 5.\nMore.", SourceType::Official, None),
        ])
        .unwrap();
        let d = Draft { answer_text: "The deadline is January 5. [1][2]".into(), citations: vec!["m1".into(), "o1".into()], refused: false };
        let p = present_answer(&d, &i);
        assert_eq!(p.sources, ["https://uni.edu/o1", "https://uni.edu/m1"]);
        assert_eq!(p.citations[1].snippet, "The deadline is January 5.");
        assert_eq!(p.citations[0].n, 1);
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["citations"][1]["source_type"], "Official");
    }

    #[test]
    fn dangling_citation() {
        let d = Draft { answer_text: "x [1]".into(), citations: vec!["gone".into()], refused: false };
        let p = present_answer(&d, &LexicalIndex::new());
        assert!(p.sources.is_empty());
        assert_eq!(p.citations[0].source_type, None);
    }
}
