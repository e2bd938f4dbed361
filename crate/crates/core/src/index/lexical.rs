use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{IndexError, RetrievalRequest, Retriever, ScoredChunk};
use crate::chunker::Chunk;
use crate::text::is_stopword;

/// Index terms: lowercase alphanumeric runs, keeping a `.` between digits so
/// that values like `3.72` stay whole. Stopwords are dropped.
pub fn index_terms(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point = c == '.'
            && cur.chars().last().is_some_and(|p| p.is_ascii_digit())
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if c.is_alphanumeric() || decimal_point {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out.retain(|t| !is_stopword(t));
    out
}

pub fn term_counts(text: &str) -> BTreeMap<String, u32> {
    let mut m = BTreeMap::new();
    for t in index_terms(text) {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

/// IDF = ln((N + 1) / (df + 1)) + 1
pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((n_docs as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub added: usize,
    pub total: usize,
}

/// TF-IDF vectors with raw term frequency and smoothed IDF, scored by cosine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexicalIndex {
    postings: BTreeMap<String, Vec<(String, u32)>>,
    doc_terms: BTreeMap<String, BTreeMap<String, u32>>,
    doc_norms: BTreeMap<String, f64>,
    idf: BTreeMap<String, f64>,
    chunk_store: BTreeMap<String, Chunk>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct PostingsFile {
    postings: BTreeMap<String, Vec<(String, u32)>>,
    idf: BTreeMap<String, f64>,
    doc_norms: BTreeMap<String, f64>,
}

pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const POSTINGS_FILE: &str = "postings.json";

impl LexicalIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.chunk_store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_store.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Chunk> {
        self.chunk_store.get(id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunk_store.values()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.idf.keys().map(String::as_str)
    }

    /// Adds a batch atomically: on `DuplicateId` nothing is added.
    pub fn index_chunks(&mut self, chunks: Vec<Chunk>) -> Result<IndexStats, IndexError> {
        let mut batch_ids = BTreeSet::new();
        for c in &chunks {
            if self.chunk_store.contains_key(&c.id) || !batch_ids.insert(c.id.clone()) {
                return Err(IndexError::DuplicateId(c.id.clone()));
            }
        }
        let added = chunks.len();
        for c in chunks {
            let tf = term_counts(&c.text);
            for (term, n) in &tf {
                self.postings.entry(term.clone()).or_default().push((c.id.clone(), *n));
            }
            self.doc_terms.insert(c.id.clone(), tf);
            self.chunk_store.insert(c.id.clone(), c);
        }
        if added > 0 {
            self.commit();
        }
        Ok(IndexStats { added, total: self.len() })
    }

    /// Recomputes IDF and every document norm; postings are kept in chunk id
    /// order so the persisted form does not depend on insertion order.
    fn commit(&mut self) {
        for p in self.postings.values_mut() {
            p.sort();
        }
        let n = self.chunk_store.len();
        self.idf = self.postings.iter().map(|(t, p)| (t.clone(), smoothed_idf(n, p.len()))).collect();
        self.doc_norms = self
            .doc_terms
            .iter()
            .map(|(id, tf)| {
                let sq: f64 = tf.iter().map(|(t, &c)| (c as f64 * self.idf[t]).powi(2)).sum();
                (id.clone(), sq.sqrt())
            })
            .collect();
    }

    /// Cosine between two texts in this index's vector space. Terms outside
    /// the vocabulary are ignored.
    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        let va = self.vector(a);
        let vb = self.vector(b);
        let dot: f64 = va.iter().filter_map(|(t, x)| vb.get(t).map(|y| x * y)).sum();
        let na = va.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
    }

    fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        term_counts(text).into_iter().filter_map(|(t, c)| self.idf.get(&t).map(|w| (t, c as f64 * w))).collect()
    }

    pub fn lexical_search(&self, req: &RetrievalRequest) -> Vec<ScoredChunk> {
        let q = self.vector(&req.query);
        let q_norm = q.values().map(|x| x * x).sum::<f64>().sqrt();
        if q_norm == 0.0 {
            return Vec::new();
        }
        let mut dots: BTreeMap<&str, f64> = BTreeMap::new();
        for (term, qw) in &q {
            let idf = self.idf[term];
            for (id, tf) in &self.postings[term] {
                *dots.entry(id.as_str()).or_insert(0.0) += qw * (*tf as f64 * idf);
            }
        }
        let mut hits: Vec<ScoredChunk> = dots
            .into_iter()
            .filter_map(|(id, dot)| {
                let chunk = &self.chunk_store[id];
                if !req.admits(chunk) {
                    return None;
                }
                let score = dot / (q_norm * self.doc_norms[id]);
                (score > 0.0).then(|| ScoredChunk { chunk: chunk.clone(), score })
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk.id.cmp(&b.chunk.id)));
        hits.truncate(req.top_k);
        hits
    }

    /// Stable digest of the full index state.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for c in self.chunk_store.values() {
            h.update(serde_json::to_vec(c).expect("chunk serializes"));
            h.update(b"\n");
        }
        h.update(serde_json::to_vec(&self.postings).expect("postings serialize"));
        hex::encode(h.finalize())
    }

    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        let io = |p: &Path, e| IndexError::Io { path: p.to_owned(), source: e };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let chunks_path = dir.join(CHUNKS_FILE);
        let mut f = fs::File::create(&chunks_path).map_err(|e| io(&chunks_path, e))?;
        for c in self.chunk_store.values() {
            let line = serde_json::to_string(c).expect("chunk serializes");
            writeln!(f, "{line}").map_err(|e| io(&chunks_path, e))?;
        }
        let postings_path = dir.join(POSTINGS_FILE);
        let pf = PostingsFile { postings: self.postings.clone(), idf: self.idf.clone(), doc_norms: self.doc_norms.clone() };
        fs::write(&postings_path, serde_json::to_vec(&pf).expect("postings serialize")).map_err(|e| io(&postings_path, e))
    }

    /// Loads both files and checks that the postings agree with the chunks.
    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let chunks = read_chunks_jsonl(&dir.join(CHUNKS_FILE))?;
        let postings_path = dir.join(POSTINGS_FILE);
        let bytes = fs::read(&postings_path).map_err(|e| IndexError::Io { path: postings_path.clone(), source: e })?;
        let stored: PostingsFile = serde_json::from_slice(&bytes)
            .map_err(|e| IndexError::Corrupt { path: postings_path.clone(), reason: e.to_string() })?;
        let mut idx = LexicalIndex::new();
        idx.index_chunks(chunks)?;
        if stored.postings != idx.postings || stored.idf.keys().ne(idx.idf.keys()) || stored.doc_norms.keys().ne(idx.doc_norms.keys()) {
            return Err(IndexError::Corrupt { path: postings_path, reason: "postings do not match chunk store".into() });
        }
        Ok(idx)
    }
}

pub fn read_chunks_jsonl(path: &Path) -> Result<Vec<Chunk>, IndexError> {
    let f = fs::File::open(path).map_err(|e| IndexError::Io { path: path.to_owned(), source: e })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| IndexError::Io { path: path.to_owned(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let chunk = serde_json::from_str(&line).map_err(|e| IndexError::Corrupt {
            path: PathBuf::from(format!("{}:{}", path.display(), i + 1)),
            reason: e.to_string(),
        })?;
        out.push(chunk);
    }
    Ok(out)
}

impl Retriever for LexicalIndex {
    fn search(&self, req: &RetrievalRequest) -> Vec<ScoredChunk> {
        self.lexical_search(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::SourceType;
    use crate::index::test_chunk;
    use proptest::prelude::*;

    fn idx(texts: &[&str]) -> LexicalIndex {
        let mut i = LexicalIndex::new();
        i.index_chunks(texts.iter().enumerate().map(|(n, t)| test_chunk(&format!("c{n:02}"), t, SourceType::Official, None)).collect())
            .unwrap();
        i
    }

    #[test]
    fn terms_keep_decimals() {
        assert_eq!(index_terms("Cumulative GPA: 3.72."), ["cumulative", "gpa", "3.72"]);
        assert_eq!(index_terms("What is the SAT?"), ["sat"]);
        assert_eq!(index_terms("555-123-4567"), ["555", "123", "4567"]);
    }

    #[test]
    fn stats_and_duplicates() {
        let mut i = idx(&["a b", "c d"]);
        assert_eq!(i.index_chunks(vec![]).unwrap(), IndexStats { added: 0, total: 2 });
        let dup = test_chunk("c00", "x", SourceType::Official, None);
        assert!(matches!(i.index_chunks(vec![dup]), Err(IndexError::DuplicateId(id)) if id == "c00"));
        assert_eq!(i.len(), 2);
    }

    #[test]
    fn self_query_ranks_first() {
        let texts = ["deadline january fifth", "financial aid form", "deadline for aid"];
        let i = idx(&texts);
        let hits = i.lexical_search(&RetrievalRequest::new(texts[2], 10));
        assert_eq!(hits[0].chunk.id, "c02");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_is_empty() {
        let i = idx(&["alpha beta"]);
        assert!(i.lexical_search(&RetrievalRequest::new("gamma", 5)).is_empty());
    }

    #[test]
    fn scope_isolation() {
        let mut i = LexicalIndex::new();
        i.index_chunks(vec![
            test_chunk("a", "gpa 3.9", SourceType::Personal, Some("u1")),
            test_chunk("b", "gpa 3.1", SourceType::Personal, Some("u2")),
            test_chunk("c", "gpa policy", SourceType::Official, None),
        ])
        .unwrap();
        let mut req = RetrievalRequest::new("gpa", 10);
        req.user_scope = Some("u1".into());
        let ids: Vec<String> = i.lexical_search(&req).into_iter().map(|h| h.chunk.id).collect();
        assert!(ids.contains(&"a".into()) && ids.contains(&"c".into()) && !ids.contains(&"b".into()));
        req.user_scope = None;
        let ids: Vec<String> = i.lexical_search(&req).into_iter().map(|h| h.chunk.id).collect();
        assert_eq!(ids, ["c"]);
        req.source_filter = Some([SourceType::Personal].into());
        assert!(i.lexical_search(&req).is_empty());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let i = idx(&["one two", "two three"]);
        i.save(dir.path()).unwrap();
        let back = LexicalIndex::load(dir.path()).unwrap();
        assert_eq!(back.fingerprint(), i.fingerprint());
        fs::remove_file(dir.path().join(POSTINGS_FILE)).unwrap();
        assert!(matches!(LexicalIndex::load(dir.path()), Err(IndexError::Io { .. })));
        i.save(dir.path()).unwrap();
        fs::write(dir.path().join(CHUNKS_FILE), "").unwrap();
        assert!(matches!(LexicalIndex::load(dir.path()), Err(IndexError::Corrupt { .. })));
    }

    proptest! {
        #[test]
        fn results_sorted_and_bounded(docs in proptest::collection::vec("[b-h]( [b-h]){0,8}", 1..30), q in "[b-h]( [b-h]){0,4}", k in 1usize..10) {
            let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
            let i = idx(&refs);
            let hits = i.lexical_search(&RetrievalRequest::new(&q, k));
            prop_assert!(hits.len() <= k);
            for w in hits.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            for h in &hits {
                prop_assert!(h.score > 0.0 && h.score <= 1.0 + 1e-12);
            }
        }
    }
}
