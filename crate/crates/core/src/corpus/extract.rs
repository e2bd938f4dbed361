//! Layout-aware text extraction from HTML.

use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::text::clean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "snake_case")]
pub enum BlockKind {
    /// h1..h6
    Heading(u8),
    /// Nesting depth, 0 for a top-level list.
    ListItem(u8),
    Paragraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBlock {
    pub kind: BlockKind,
    pub text: String,
    /// Number of anchors inside the block.
    pub links: usize,
}

impl TextBlock {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    pub fn link_density(&self) -> f64 {
        let words = self.word_count();
        if words == 0 {
            return 0.0;
        }
        self.links as f64 / words as f64
    }

    pub fn render(&self) -> String {
        match self.kind {
            BlockKind::Heading(level) => format!("{} {}", "#".repeat(level as usize), self.text),
            BlockKind::ListItem(depth) => format!("{}- {}", "  ".repeat(depth as usize), self.text),
            BlockKind::Paragraph => self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructuredText {
    pub blocks: Vec<TextBlock>,
}

impl StructuredText {
    pub fn render(&self) -> String {
        self.blocks.iter().map(TextBlock::render).collect::<Vec<_>>().join("\n")
    }

    /// Parses the rendered form back into blocks. Link counts are not
    /// recoverable and read as zero.
    pub fn parse(text: &str) -> Self {
        let blocks = text
            .lines()
            .filter_map(|line| {
                let trimmed = line.trim_start();
                if trimmed.is_empty() {
                    return None;
                }
                let hashes = trimmed.bytes().take_while(|&b| b == b'#').count();
                if (1..=6).contains(&hashes) && trimmed[hashes..].starts_with(' ') {
                    return Some(TextBlock {
                        kind: BlockKind::Heading(hashes as u8),
                        text: clean(&trimmed[hashes..]),
                        links: 0,
                    });
                }
                if let Some(rest) = trimmed.strip_prefix("- ") {
                    let indent = line.len() - trimmed.len();
                    return Some(TextBlock { kind: BlockKind::ListItem((indent / 2) as u8), text: clean(rest), links: 0 });
                }
                Some(TextBlock { kind: BlockKind::Paragraph, text: clean(trimmed), links: 0 })
            })
            .collect();
        StructuredText { blocks }
    }
}

const DROPPED_TAGS: &[&str] =
    &["head", "header", "footer", "iframe", "nav", "noscript", "script", "style", "svg", "template"];

const BOILERPLATE_TOKENS: &[&str] = &[
    "breadcrumb",
    "breadcrumbs",
    "cookie-banner",
    "cookie-notice",
    "footer",
    "header",
    "main-menu",
    "menu",
    "nav",
    "navbar",
    "navigation",
    "site-footer",
    "site-header",
    "skip-link",
];

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "dd", "div", "dl", "dt", "fieldset", "figcaption",
    "figure", "form", "html", "main", "p", "pre", "section", "table", "tbody", "td", "tfoot", "th", "thead", "tr",
];

fn is_boilerplate(el: &ElementRef) -> bool {
    let v = el.value();
    if DROPPED_TAGS.contains(&v.name()) {
        return true;
    }
    let id_hit = v.id().is_some_and(|id| BOILERPLATE_TOKENS.contains(&id.to_ascii_lowercase().as_str()));
    id_hit || v.classes().any(|c| BOILERPLATE_TOKENS.contains(&c.to_ascii_lowercase().as_str()))
}

struct Walker {
    blocks: Vec<TextBlock>,
    buf: String,
    buf_links: usize,
    list_depth: usize,
    /// Kind used when the buffer is flushed.
    pending: BlockKind,
}

impl Walker {
    fn flush(&mut self) {
        let text = clean(&self.buf);
        if !text.is_empty() {
            self.blocks.push(TextBlock { kind: self.pending, text, links: self.buf_links });
        }
        self.buf.clear();
        self.buf_links = 0;
    }

    fn walk(&mut self, el: ElementRef) {
        if is_boilerplate(&el) {
            return;
        }
        let name = el.value().name();
        match name {
            "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                self.flush();
                let saved = self.pending;
                self.pending = BlockKind::Heading(name.as_bytes()[1] - b'0');
                self.children(el);
                self.flush();
                self.pending = saved;
            }
            "ul" | "ol" => {
                self.flush();
                self.list_depth += 1;
                self.children(el);
                self.list_depth -= 1;
                self.flush();
            }
            "li" => {
                self.flush();
                let saved = self.pending;
                self.pending = BlockKind::ListItem(self.list_depth.saturating_sub(1) as u8);
                self.children(el);
                self.flush();
                self.pending = saved;
            }
            "br" => self.buf.push(' '),
            "a" => {
                self.buf_links += 1;
                self.children(el);
            }
            _ if BLOCK_TAGS.contains(&name) => {
                self.flush();
                self.children(el);
                self.flush();
            }
            _ => self.children(el),
        }
    }

    fn children(&mut self, el: ElementRef) {
        for child in el.children() {
            match child.value() {
                Node::Text(t) => self.buf.push_str(t),
                Node::Element(_) => {
                    if let Some(e) = ElementRef::wrap(child) {
                        self.walk(e);
                    }
                }
                _ => {}
            }
        }
    }
}

/// Extracts headings, list items and paragraphs in document order.
pub fn extract_page_text(html: &str) -> StructuredText {
    let doc = Html::parse_document(html);
    let mut w = Walker { blocks: Vec::new(), buf: String::new(), buf_links: 0, list_depth: 0, pending: BlockKind::Paragraph };
    w.walk(doc.root_element());
    w.flush();
    StructuredText { blocks: w.blocks }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub url: Url,
    pub anchor_text: String,
}

/// Page title and resolved outgoing links, in document order.
pub fn parse_page(html: &str, base: &Url) -> (String, Vec<Link>) {
    let doc = Html::parse_document(html);
    let title_sel = Selector::parse("title").expect("static selector");
    let h1_sel = Selector::parse("h1").expect("static selector");
    let a_sel = Selector::parse("a[href]").expect("static selector");
    let title = doc
        .select(&title_sel)
        .chain(doc.select(&h1_sel))
        .map(|e| clean(&e.text().collect::<String>()))
        .find(|t| !t.is_empty())
        .unwrap_or_default();
    let links = doc
        .select(&a_sel)
        .filter_map(|a| {
            let href = a.value().attr("href")?.trim();
            let url = base.join(href).ok()?;
            Some(Link { url, anchor_text: clean(&a.text().collect::<String>()) })
        })
        .collect();
    (title, links)
}
