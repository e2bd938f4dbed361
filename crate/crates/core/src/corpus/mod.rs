//! Institution crawling and page corpus management.

pub mod boilerplate;
pub mod crawl;
pub mod extract;
pub mod manifest;
pub mod sim;

use std::path::{Path, PathBuf};

pub use boilerplate::remove_boilerplate;
pub use crawl::{
    classify_link, crawl_institution, crawl_institutions, CrawlConfig, CrawlResult, FetchError, FetchResponse, Fetcher,
    InstitutionCrawl, LinkClass,
};
pub use extract::{extract_page_text, BlockKind, StructuredText, TextBlock};
pub use manifest::{write_manifest, Manifest, PageRecord, PageStatus};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid crawl config: {0}")]
    Config(String),
    #[error("invalid seed url `{0}`")]
    BadSeed(String),
    #[error("seed {url} unreachable: {reason}")]
    SeedUnreachable { url: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.to_owned(), source }
    }
}
