//! Section trees over paged documents.
//!
//! Headings are `#`-prefixed lines, or short ALL-CAPS lines without digits
//! (treated as level 1). Each node spans from its heading line to the line
//! before the next heading of the same or a higher level.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{sentences, Message, ModelClient, ModelRequest, ModelResponse};
use crate::text::content_words;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub node_id: String,
    pub title: String,
    /// 0 for the root.
    pub level: u8,
    /// 1-based, inclusive.
    pub page_start: usize,
    pub page_end: usize,
    /// Line span over the whole document, end exclusive.
    pub line_start: usize,
    pub line_end: usize,
    pub summary: String,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&TreeNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocTree {
    pub root: TreeNode,
    pub page_text: Vec<String>,
}

impl DocTree {
    /// Every line of the document with its 1-based page number.
    pub fn lines(&self) -> Vec<(usize, &str)> {
        self.page_text.iter().enumerate().flat_map(|(p, text)| text.split('\n').map(move |l| (p + 1, l))).collect()
    }

    pub fn node_text(&self, node: &TreeNode) -> String {
        self.lines()[node.line_start..node.line_end].iter().map(|(_, l)| *l).collect::<Vec<_>>().join("\n")
    }

    /// Pages `start..=end` joined by newlines.
    pub fn page_range_text(&self, start: usize, end: usize) -> String {
        self.page_text[start - 1..end].join("\n")
    }
}

pub trait NodeSummarizer {
    fn summarize(&self, title: &str, body: &str) -> String;
}

/// The first sentence of the section body, or the title when it has none.
#[derive(Debug, Default, Clone, Copy)]
pub struct FirstSentence;

impl NodeSummarizer for FirstSentence {
    fn summarize(&self, title: &str, body: &str) -> String {
        sentences(body).first().map_or_else(|| title.to_owned(), |s| s.to_string())
    }
}

/// Asks a model for a one-sentence summary; falls back to the first sentence.
pub struct ModelSummarizer<'a>(pub &'a dyn ModelClient);

impl NodeSummarizer for ModelSummarizer<'_> {
    fn summarize(&self, title: &str, body: &str) -> String {
        let req = ModelRequest {
            system_text: "Summarize the document section in one sentence.".into(),
            messages: vec![Message::user(format!("Title: {title}\n{body}"))],
            tools: vec![],
        };
        match self.0.complete(&req) {
            Ok(ModelResponse::Text(t)) if !t.trim().is_empty() => t.trim().to_owned(),
            _ => FirstSentence.summarize(title, body),
        }
    }
}

pub trait NodeSelector {
    /// Ids of the nodes relevant to `query`.
    fn select(&self, query: &str, nodes: &[&TreeNode]) -> BTreeSet<String>;
}

/// Selects nodes whose title plus summary shares enough content words with
/// the query: shared / min(|query|, |node|) >= threshold.
#[derive(Debug, Clone, Copy)]
pub struct OverlapSelector {
    pub threshold: f64,
}

impl Default for OverlapSelector {
    fn default() -> Self {
        OverlapSelector { threshold: 0.2 }
    }
}

pub fn content_overlap(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = content_words(a).into_iter().collect();
    let sb: BTreeSet<String> = content_words(b).into_iter().collect();
    let shared = sa.intersection(&sb).count();
    if shared == 0 {
        return 0.0;
    }
    shared as f64 / sa.len().min(sb.len()) as f64
}

impl NodeSelector for OverlapSelector {
    fn select(&self, query: &str, nodes: &[&TreeNode]) -> BTreeSet<String> {
        nodes
            .iter()
            .filter(|n| {
                let s = content_overlap(query, &format!("{} {}", n.title, n.summary));
                s > 0.0 && s >= self.threshold
            })
            .map(|n| n.node_id.clone())
            .collect()
    }
}

/// Shows the model the node list and reads back comma-separated node ids.
pub struct ModelSelector<'a>(pub &'a dyn ModelClient);

impl NodeSelector for ModelSelector<'_> {
    fn select(&self, query: &str, nodes: &[&TreeNode]) -> BTreeSet<String> {
        let listing: String = nodes.iter().map(|n| format!("{} | {} | {}\n", n.node_id, n.title, n.summary)).collect();
        let req = ModelRequest {
            system_text: "Reply with the comma-separated ids of the sections relevant to the query.".into(),
            messages: vec![Message::user(format!("Query: {query}\nSections:\n{listing}"))],
            tools: vec![],
        };
        let known: BTreeSet<&str> = nodes.iter().map(|n| n.node_id.as_str()).collect();
        match self.0.complete(&req) {
            Ok(ModelResponse::Text(t)) => {
                t.split(',').map(str::trim).filter(|id| known.contains(id)).map(str::to_owned).collect()
            }
            _ => BTreeSet::new(),
        }
    }
}

fn heading_of(line: &str) -> Option<(u8, String)> {
    let t = line.trim();
    let hashes = t.bytes().take_while(|&b| b == b'#').count();
    if (1..=6).contains(&hashes) && t[hashes..].starts_with(' ') && !t[hashes..].trim().is_empty() {
        return Some((hashes as u8, t[hashes..].trim().to_owned()));
    }
    let letters = t.chars().filter(|c| c.is_alphabetic()).count();
    let caps = letters >= 2
        && t.len() <= 60
        && t.split_whitespace().count() <= 6
        && t.chars().all(|c| !c.is_alphabetic() || c.is_uppercase())
        && !t.chars().any(|c| c.is_ascii_digit() || matches!(c, '.' | ':' | ','));
    caps.then(|| (1, t.to_owned()))
}

struct Proto {
    level: u8,
    title: String,
    start: usize,
    end: usize,
    children: Vec<usize>,
}

pub fn build_doc_tree(pages: &[String], summarizer: &dyn NodeSummarizer) -> DocTree {
    let pages: Vec<String> = if pages.is_empty() { vec![String::new()] } else { pages.to_vec() };
    let tree = DocTree {
        root: TreeNode {
            node_id: String::new(),
            title: String::new(),
            level: 0,
            page_start: 1,
            page_end: 1,
            line_start: 0,
            line_end: 0,
            summary: String::new(),
            children: vec![],
        },
        page_text: pages,
    };
    let lines = tree.lines();
    let n = lines.len();

    let mut protos = vec![Proto { level: 0, title: "Document".into(), start: 0, end: n, children: vec![] }];
    let mut stack = vec![0usize];
    for (i, (_, line)) in lines.iter().enumerate() {
        let Some((level, title)) = heading_of(line) else { continue };
        while protos[*stack.last().expect("root stays")].level >= level {
            let done = stack.pop().expect("root has level 0");
            protos[done].end = i;
        }
        let id = protos.len();
        protos.push(Proto { level, title, start: i, end: n, children: vec![] });
        let parent = *stack.last().expect("root stays");
        protos[parent].children.push(id);
        stack.push(id);
    }

    fn assemble(
        idx: usize,
        node_id: String,
        protos: &[Proto],
        lines: &[(usize, &str)],
        summarizer: &dyn NodeSummarizer,
    ) -> TreeNode {
        let p = &protos[idx];
        let body_start = if idx == 0 { p.start } else { p.start + 1 };
        let body: Vec<&str> = lines[body_start.min(p.end)..p.end].iter().map(|(_, l)| *l).collect();
        let children = p
            .children
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let id = if idx == 0 { format!("{}", k + 1) } else { format!("{node_id}.{}", k + 1) };
                assemble(c, id, protos, lines, summarizer)
            })
            .collect();
        TreeNode {
            node_id,
            title: p.title.clone(),
            level: p.level,
            page_start: lines.get(p.start).map_or(1, |l| l.0),
            page_end: if p.end > p.start { lines[p.end - 1].0 } else { lines.get(p.start).map_or(1, |l| l.0) },
            line_start: p.start,
            line_end: p.end,
            summary: summarizer.summarize(&p.title, &body.join("\n")),
            children,
        }
    }

    let mut root = assemble(0, "0".into(), &protos, &lines, summarizer);
    root.page_start = 1;
    root.page_end = tree.page_text.len();
    DocTree { root, page_text: tree.page_text }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionHit {
    pub node_id: String,
    pub title: String,
    pub page_range: (usize, usize),
    pub extracted_text: String,
}

/// Selected nodes, keeping only the deepest: a node is dropped when one of
/// its descendants is also selected. Hits are in document order.
pub fn tree_navigate(tree: &DocTree, query: &str, selector: &dyn NodeSelector) -> Vec<SectionHit> {
    let nodes = tree.root.walk();
    let selected = selector.select(query, &nodes);
    nodes
        .iter()
        .filter(|n| selected.contains(&n.node_id))
        .filter(|n| !n.walk().iter().skip(1).any(|d| selected.contains(&d.node_id)))
        .map(|n| SectionHit {
            node_id: n.node_id.clone(),
            title: n.title.clone(),
            page_range: (n.page_start, n.page_end),
            extracted_text: tree.node_text(n),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScriptedModel;

    fn resume() -> Vec<String> {
        vec![
            "# Education\nLincoln High School, class of 2025.\nCumulative GPA: 3.72\n\
             # Experience\nLab assistant at the county hospital.\n\
             # Awards\nScience Fair Award, 2023."
                .into(),
        ]
    }

    #[test]
    fn resume_has_three_sections() {
        let t = build_doc_tree(&resume(), &FirstSentence);
        let titles: Vec<&str> = t.root.children.iter().map(|c| c.title.as_str()).collect();
        assert_eq!(titles, ["Education", "Experience", "Awards"]);
        assert!(t.root.children.iter().all(|c| c.children.is_empty() && c.page_start == 1 && c.page_end == 1));
        assert_eq!(t.root.children[2].summary, "Science Fair Award, 2023.");
    }

    #[test]
    fn awards_query_hits_awards_only() {
        let t = build_doc_tree(&resume(), &FirstSentence);
        let hits = tree_navigate(&t, "awards", &OverlapSelector::default());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].title, "Awards");
        assert_eq!(hits[0].extracted_text, "# Awards\nScience Fair Award, 2023.");
    }

    #[test]
    fn unstructured_is_root_only() {
        let t = build_doc_tree(&["just some prose without headings.".into()], &FirstSentence);
        assert!(t.root.children.is_empty());
        assert!(tree_navigate(&t, "quantum chromodynamics", &OverlapSelector::default()).is_empty());
    }

    #[test]
    fn nested_headings_nest_and_span_pages() {
        let pages = vec![
            "# Academics\nOverview of coursework.\n## Honors Courses\nAP Biology and AP Calculus.".to_string(),
            "More honors detail.\n# Service\nFood bank volunteer.".to_string(),
        ];
        let t = build_doc_tree(&pages, &FirstSentence);
        assert_eq!(t.root.page_end, 2);
        let acad = &t.root.children[0];
        assert_eq!((acad.page_start, acad.page_end), (1, 2));
        let honors = &acad.children[0];
        assert_eq!(honors.node_id, "1.1");
        assert_eq!((honors.page_start, honors.page_end), (1, 2));
        assert!(acad.page_start <= honors.page_start && honors.page_end <= acad.page_end);
        assert_eq!(t.root.children[1].page_start, 2);
    }

    #[test]
    fn deepest_match_wins() {
        let pages = vec!["# Research\nResearch overview.\n## Marine Research\nKelp forest research internship.".to_string()];
        let t = build_doc_tree(&pages, &FirstSentence);
        let hits = tree_navigate(&t, "kelp research", &OverlapSelector::default());
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].title, "Marine Research");
    }

    #[test]
    fn caps_lines_are_headings() {
        let t = build_doc_tree(&["EDUCATION\nGPA: 3.9\nAWARDS\nHonor roll.".into()], &FirstSentence);
        let titles: Vec<&str> = t.root.children.iter().map(|c| c.title.as_str()).collect();
        assert_eq!(titles, ["EDUCATION", "AWARDS"]);
    }

    #[test]
    fn hits_are_substrings_of_their_pages() {
        let pages = vec![
            "# A\nalpha one.\n## B\nbeta two.".to_string(),
            "gamma three.\n# C\ndelta four.\nEPSILON\nzeta five.".to_string(),
        ];
        let t = build_doc_tree(&pages, &FirstSentence);
        for n in t.root.walk() {
            let text = t.node_text(n);
            assert!(t.page_range_text(n.page_start, n.page_end).contains(&text), "{}", n.node_id);
            for c in &n.children {
                assert!(n.page_start <= c.page_start && c.page_end <= n.page_end);
            }
        }
        let ids: BTreeSet<&str> = t.root.walk().iter().map(|n| n.node_id.as_str()).collect();
        assert_eq!(ids.len(), t.root.walk().len());
    }

    #[test]
    fn model_selector_and_summarizer() {
        let m = ScriptedModel::new(vec![
            ModelResponse::Text("Studies.".into()),
            ModelResponse::Text("Jobs.".into()),
            ModelResponse::Text("Prizes.".into()),
            ModelResponse::Text("Root.".into()),
        ]);
        let t = build_doc_tree(&resume(), &ModelSummarizer(&m));
        assert_eq!(t.root.children[0].summary, "Studies.");
        let sel = ScriptedModel::new(vec![ModelResponse::Text("3, bogus".into())]);
        let hits = tree_navigate(&t, "anything", &ModelSelector(&sel));
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].title, "Awards");
    }
}
