//! Lexical retrieval with source tiering, and document trees for
//! structure-aware lookup in personal documents.

pub mod lexical;
pub mod tree;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::chunker::{Chunk, SourceType};

pub use lexical::{index_terms, IndexStats, LexicalIndex};
pub use tree::{build_doc_tree, tree_navigate, DocTree, SectionHit, TreeNode};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate chunk id `{0}`")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

/// Default escalation threshold for tiered retrieval.
pub const DEFAULT_TAU: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRequest {
    pub query: String,
    pub top_k: usize,
    pub source_filter: Option<BTreeSet<SourceType>>,
    pub user_scope: Option<String>,
}

impl RetrievalRequest {
    pub fn new(query: &str, top_k: usize) -> Self {
        RetrievalRequest { query: query.to_owned(), top_k: top_k.max(1), source_filter: None, user_scope: None }
    }

    pub fn scoped(mut self, user: &str) -> Self {
        self.user_scope = Some(user.to_owned());
        self
    }

    pub fn only(mut self, types: &[SourceType]) -> Self {
        self.source_filter = Some(types.iter().copied().collect());
        self
    }

    /// Public chunks are visible to everyone; owned chunks only to their
    /// owner's scope.
    pub fn admits(&self, chunk: &Chunk) -> bool {
        let scope_ok = match &chunk.owner {
            None => true,
            Some(owner) => self.user_scope.as_deref() == Some(owner.as_str()),
        };
        scope_ok && self.source_filter.as_ref().is_none_or(|f| f.contains(&chunk.source_type))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

/// Any ranked search backend.
pub trait Retriever: Send + Sync {
    fn search(&self, req: &RetrievalRequest) -> Vec<ScoredChunk>;
}

/// Searches Official, then Faq, then Community. A lower tier is consulted
/// only while the best score seen so far is below `tau`. Results keep tier
/// precedence, then score, and are cut to `top_k`.
pub fn tiered_retrieve(r: &dyn Retriever, req: &RetrievalRequest, tau: f64) -> Vec<ScoredChunk> {
    let mut out: Vec<ScoredChunk> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for tier in SourceType::PUBLIC_TIERS {
        if req.source_filter.as_ref().is_some_and(|f| !f.contains(&tier)) {
            continue;
        }
        if best >= tau {
            break;
        }
        let mut tier_req = req.clone();
        tier_req.source_filter = Some([tier].into());
        let hits = r.search(&tier_req);
        if let Some(top) = hits.first() {
            best = best.max(top.score);
        }
        out.extend(hits);
    }
    out.truncate(req.top_k);
    out
}

#[cfg(test)]
pub(crate) fn test_chunk(id: &str, text: &str, st: SourceType, owner: Option<&str>) -> Chunk {
    Chunk {
        id: id.into(),
        text: text.into(),
        token_count: text.split_whitespace().count(),
        institution: "uni.edu".into(),
        source_url: format!("https://uni.edu/{id}"),
        page_title: "t".into(),
        section_heading: None,
        source_type: st,
        crawl_timestamp: chrono::DateTime::from_timestamp(0, 0).unwrap(),
        chunk_index: 0,
        category: None,
        owner: owner.map(str::to_owned),
        oversized: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Counting<'a> {
        inner: &'a LexicalIndex,
        tiers: Mutex<Vec<SourceType>>,
    }

    impl Retriever for Counting<'_> {
        fn search(&self, req: &RetrievalRequest) -> Vec<ScoredChunk> {
            let f = req.source_filter.as_ref().unwrap();
            self.tiers.lock().unwrap().extend(f.iter().copied());
            self.inner.search(req)
        }
    }

    fn index() -> LexicalIndex {
        let mut i = LexicalIndex::new();
        i.index_chunks(vec![
            test_chunk("o1", "application deadline january fifth", SourceType::Official, None),
            test_chunk("f1", "faq about housing deposits", SourceType::Faq, None),
            test_chunk("m1", "forum thread on dorm laundry machines", SourceType::Community, None),
            test_chunk("m2", "application deadline january fifth", SourceType::Community, None),
        ])
        .unwrap();
        i
    }

    #[test]
    fn confident_official_stops_escalation() {
        let i = index();
        let c = Counting { inner: &i, tiers: Mutex::new(vec![]) };
        let hits = tiered_retrieve(&c, &RetrievalRequest::new("application deadline", 5), DEFAULT_TAU);
        assert_eq!(*c.tiers.lock().unwrap(), [SourceType::Official]);
        assert!(hits.iter().all(|h| h.chunk.source_type == SourceType::Official));
    }

    #[test]
    fn community_only_match() {
        let i = index();
        let hits = tiered_retrieve(&i, &RetrievalRequest::new("laundry machines", 5), DEFAULT_TAU);
        assert!(!hits.is_empty());
        assert!(hits.iter().all(|h| h.chunk.source_type == SourceType::Community));
    }

    #[test]
    fn official_first_on_tie() {
        let i = index();
        // An unreachable tau forces every tier to be consulted.
        let hits = tiered_retrieve(&i, &RetrievalRequest::new("application deadline", 5), 2.0);
        let ids: Vec<&str> = hits.iter().map(|h| h.chunk.id.as_str()).collect();
        assert_eq!(ids, ["o1", "m2"]);
        assert_eq!(hits[0].score, hits[1].score);
    }
}
