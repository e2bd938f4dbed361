//! Polite, keyword-prioritized BFS crawler.
//!
//! Two FIFO queues are kept per institution; the high-priority queue is
//! always drained first. Every fetch after the first waits a uniformly drawn
//! politeness delay, and retries add an exponential backoff on top of it.
//! The whole crawl state is a serializable checkpoint written after each
//! page, so an interrupted crawl resumes exactly where it stopped.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use super::boilerplate::remove_boilerplate;
use super::extract::{extract_page_text, parse_page};
use super::manifest::{find_prior_manifest, sha256_hex, write_atomic, write_manifest, Manifest, PageRecord, PageStatus};
use super::CorpusError;
use crate::clock::Clock;
use crate::text::normalize;

pub const DEFAULT_PRIORITY_KEYWORDS: [&str; 7] = [
    "application requirements",
    "deadlines",
    "testing policies",
    "financial aid",
    "international applicants",
    "transcript request",
    "letters of recommendation",
];

/// Extensions that are logged but never fetched as pages.
pub const RESOURCE_EXTENSIONS: &[&str] = &[
    "avi", "css", "csv", "doc", "docx", "gif", "ico", "jpeg", "jpg", "js", "mov", "mp3", "mp4", "pdf", "png", "ppt",
    "pptx", "svg", "webm", "webp", "xls", "xlsx", "zip",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrawlConfig {
    pub max_pages: usize,
    pub delay_range_s: (f64, f64),
    pub max_retries: u32,
    pub priority_keywords: Vec<String>,
    pub max_concurrent_institutions: usize,
    pub crawl_version: String,
    pub backoff_base_s: f64,
    pub backoff_factor: f64,
    /// Seeds the politeness delay draws.
    pub rng_seed: u64,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            max_pages: 50,
            delay_range_s: (8.0, 15.0),
            max_retries: 3,
            priority_keywords: DEFAULT_PRIORITY_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            max_concurrent_institutions: 3,
            crawl_version: "v1".into(),
            backoff_base_s: 1.0,
            backoff_factor: 2.0,
            rng_seed: 0,
        }
    }
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let (lo, hi) = self.delay_range_s;
        let err = |m: &str| Err(CorpusError::Config(m.to_owned()));
        if self.max_pages == 0 {
            return err("max_pages must be positive");
        }
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return err("delay range must satisfy 0 <= min <= max");
        }
        if self.max_concurrent_institutions == 0 {
            return err("max_concurrent_institutions must be positive");
        }
        if self.backoff_base_s < 0.0 || self.backoff_factor < 1.0 {
            return err("backoff base must be >= 0 and factor >= 1");
        }
        if self.crawl_version.is_empty() || self.crawl_version.contains(['/', '\\']) || self.crawl_version.starts_with('.') {
            return err("crawl_version must be a plain directory name");
        }
        Ok(())
    }

    fn backoff(&self, attempt: u32) -> f64 {
        if attempt == 0 {
            0.0
        } else {
            self.backoff_base_s * self.backoff_factor.powi(attempt as i32 - 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkClass {
    High,
    Low,
    Excluded,
}

/// Host with a leading `www.` removed.
pub fn site_domain(url: &Url) -> Option<String> {
    let host = url.host_str()?.to_ascii_lowercase();
    Some(host.strip_prefix("www.").map(str::to_owned).unwrap_or(host))
}

pub fn in_domain(url: &Url, domain: &str) -> bool {
    matches!(url.scheme(), "http" | "https")
        && site_domain(url).is_some_and(|h| h == domain || h.ends_with(&format!(".{domain}")))
}

pub fn is_resource(url: &Url) -> bool {
    let last = url.path_segments().and_then(|mut s| s.next_back()).unwrap_or("");
    last.rsplit_once('.').is_some_and(|(_, ext)| RESOURCE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()))
}

/// Fragment removed; the url crate already lowercases hosts and resolves
/// dot segments.
pub fn normalize_url(url: &Url) -> Url {
    let mut u = url.clone();
    u.set_fragment(None);
    u
}

pub fn classify_link(url: &Url, anchor_text: &str, keywords: &[String], domain: &str) -> LinkClass {
    if !in_domain(url, domain) || is_resource(url) {
        return LinkClass::Excluded;
    }
    let path = normalize(&percent_decode(url.path()));
    let anchor = normalize(anchor_text);
    let hit = keywords.iter().map(|k| normalize(k)).filter(|k| !k.is_empty()).any(|k| path.contains(&k) || anchor.contains(&k));
    if hit { LinkClass::High } else { LinkClass::Low }
}

fn percent_decode(s: &str) -> String {
    percent_encoding::percent_decode_str(s).decode_utf8_lossy().into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    pub status_code: u16,
    pub body_html: String,
    pub final_url: Url,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("{0}")]
pub struct FetchError(pub String);

pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &Url) -> Result<FetchResponse, FetchError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchEvent {
    pub url: String,
    pub attempt: u32,
    /// Clock seconds when the request was issued.
    pub at: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub timestamp: String,
    pub url: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlCheckpoint {
    pub seed_url: String,
    pub domain: String,
    pub high: VecDeque<String>,
    pub low: VecDeque<String>,
    /// Every URL ever enqueued or visited.
    pub seen: BTreeSet<String>,
    pub records: Vec<PageRecord>,
    pub fetch_log: Vec<FetchEvent>,
    pub external: BTreeSet<String>,
    pub errors: Vec<ErrorEntry>,
    /// Indexes the delay draws, so a resumed crawl draws the same delays.
    pub fetch_count: u64,
    pub last_fetch_at: Option<f64>,
    /// The queue each visited page was taken from, in visit order.
    pub visit_classes: Vec<LinkClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlResult {
    pub domain: String,
    pub inst_dir: PathBuf,
    pub records: Vec<PageRecord>,
    pub fetch_log: Vec<FetchEvent>,
    pub visit_classes: Vec<LinkClass>,
    pub external: BTreeSet<String>,
    pub manifest: Manifest,
}

impl CrawlResult {
    pub fn ok_pages(&self) -> usize {
        self.records.iter().filter(|r| r.status == PageStatus::Ok).count()
    }
}

/// File-system safe name.
pub fn sanitize(s: &str) -> String {
    let mut out: String = s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    out.truncate(80);
    out.trim_matches('_').to_owned()
}

pub fn page_id(url: &str) -> String {
    sha256_hex(url.as_bytes())[..12].to_owned()
}

/// One institution's crawl, advanced one page at a time.
pub struct InstitutionCrawl {
    cfg: CrawlConfig,
    inst_dir: PathBuf,
    state: CrawlCheckpoint,
}

impl InstitutionCrawl {
    pub fn new(seed: &Url, cfg: &CrawlConfig, inst_dir: &Path) -> Result<Self, CorpusError> {
        cfg.validate()?;
        let domain = site_domain(seed).filter(|_| matches!(seed.scheme(), "http" | "https"));
        let Some(domain) = domain else { return Err(CorpusError::BadSeed(seed.to_string())) };
        let seed = normalize_url(seed).to_string();
        let state = CrawlCheckpoint {
            seed_url: seed.clone(),
            domain,
            high: VecDeque::from([seed.clone()]),
            low: VecDeque::new(),
            seen: BTreeSet::from([seed]),
            records: Vec::new(),
            fetch_log: Vec::new(),
            external: BTreeSet::new(),
            errors: Vec::new(),
            fetch_count: 0,
            last_fetch_at: None,
            visit_classes: Vec::new(),
        };
        Ok(InstitutionCrawl { cfg: cfg.clone(), inst_dir: inst_dir.to_owned(), state })
    }

    pub fn from_checkpoint(cp: CrawlCheckpoint, cfg: &CrawlConfig, inst_dir: &Path) -> Result<Self, CorpusError> {
        cfg.validate()?;
        Ok(InstitutionCrawl { cfg: cfg.clone(), inst_dir: inst_dir.to_owned(), state: cp })
    }

    pub fn load_checkpoint(path: &Path) -> Result<CrawlCheckpoint, CorpusError> {
        let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CorpusError::Json { path: path.to_owned(), source: e })
    }

    pub fn checkpoint(&self) -> &CrawlCheckpoint {
        &self.state
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), CorpusError> {
        write_atomic(path, &serde_json::to_vec(&self.state).expect("checkpoint serializes"))
    }

    pub fn is_done(&self) -> bool {
        self.state.records.len() >= self.cfg.max_pages || (self.state.high.is_empty() && self.state.low.is_empty())
    }

    fn politeness_delay(&self) -> f64 {
        let (lo, hi) = self.cfg.delay_range_s;
        let mut h = Sha256::new();
        h.update(self.cfg.rng_seed.to_le_bytes());
        h.update(self.state.domain.as_bytes());
        h.update(self.state.fetch_count.to_le_bytes());
        let digest = h.finalize();
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        ChaCha8Rng::seed_from_u64(seed).random_range(lo..=hi)
    }

    fn fetch_with_retries(&mut self, url: &Url, fetcher: &dyn Fetcher, clock: &dyn Clock) -> Result<FetchResponse, String> {
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            let mut wait = self.cfg.backoff(attempt);
            if self.state.last_fetch_at.is_some() {
                wait += self.politeness_delay();
            }
            if wait > 0.0 {
                clock.sleep(wait);
            }
            let at = clock.now_secs();
            self.state.last_fetch_at = Some(at);
            self.state.fetch_count += 1;
            let outcome = match fetcher.fetch(url) {
                Ok(r) if (200..300).contains(&r.status_code) => Ok(r),
                Ok(r) => Err(format!("HTTP {}", r.status_code)),
                Err(e) => Err(e.0),
            };
            self.state.fetch_log.push(FetchEvent { url: url.to_string(), attempt, at, ok: outcome.is_ok() });
            match outcome {
                Ok(r) => return Ok(r),
                Err(e) => {
                    tracing::debug!(url = %url, attempt, error = %e, "fetch failed");
                    last_err = e;
                }
            }
        }
        Err(last_err)
    }

    /// Fetches the next queued page. Returns `None` once the budget is spent
    /// or the frontier is empty.
    pub fn step(&mut self, fetcher: &dyn Fetcher, clock: &dyn Clock) -> Result<Option<PageRecord>, CorpusError> {
        if self.is_done() {
            return Ok(None);
        }
        let (raw, class) = match self.state.high.pop_front() {
            Some(u) => (u, LinkClass::High),
            None => (self.state.low.pop_front().expect("frontier not empty"), LinkClass::Low),
        };
        let url = Url::parse(&raw).expect("queued urls are absolute");
        let is_seed = self.state.records.is_empty() && raw == self.state.seed_url;
        let id = page_id(&raw);
        let mut record = PageRecord {
            url: raw.clone(),
            page_id: id.clone(),
            title: String::new(),
            html_path: None,
            text_path: None,
            pdf_path: None,
            fetched_at: clock.now_utc(),
            status: PageStatus::Failed,
            content_hash: None,
            error: None,
        };
        match self.fetch_with_retries(&url, fetcher, clock) {
            Err(e) if is_seed => {
                return Err(CorpusError::SeedUnreachable { url: raw, reason: e });
            }
            Err(e) => {
                record.fetched_at = clock.now_utc();
                record.error = Some(e.clone());
                self.log_error(&raw, &e, clock);
            }
            Ok(resp) => {
                record.fetched_at = clock.now_utc();
                let final_url = normalize_url(&resp.final_url);
                if !in_domain(&final_url, &self.state.domain) {
                    let msg = format!("redirected off-domain to {final_url}");
                    record.error = Some(msg.clone());
                    self.log_error(&raw, &msg, clock);
                } else {
                    self.state.seen.insert(final_url.to_string());
                    self.store_page(&mut record, &resp.body_html, &final_url)?;
                }
            }
        }
        self.state.records.push(record.clone());
        self.state.visit_classes.push(class);
        Ok(Some(record))
    }

    fn store_page(&mut self, record: &mut PageRecord, html: &str, base: &Url) -> Result<(), CorpusError> {
        let stem = format!("{}_{}", sanitize(&record.url.split_once("://").map_or(&*record.url, |(_, r)| r)), record.page_id);
        let html_rel = PathBuf::from("pages").join(format!("{stem}.html"));
        let text_rel = PathBuf::from("pages").join(format!("{stem}.txt"));
        let html_path = self.inst_dir.join(&html_rel);
        write_atomic(&html_path, html.as_bytes())?;
        let (title, links) = parse_page(html, base);
        record.title = if title.is_empty() { record.url.clone() } else { title };
        record.content_hash = Some(sha256_hex(html.as_bytes()));
        record.html_path = Some(html_rel);
        record.text_path = Some(text_rel);
        record.status = PageStatus::Ok;

        for link in links {
            if !matches!(link.url.scheme(), "http" | "https") {
                continue;
            }
            let u = normalize_url(&link.url);
            let key = u.to_string();
            match classify_link(&u, &link.anchor_text, &self.cfg.priority_keywords, &self.state.domain) {
                LinkClass::Excluded => {
                    self.state.external.insert(key);
                }
                class => {
                    if self.state.seen.insert(key.clone()) {
                        match class {
                            LinkClass::High => self.state.high.push_back(key),
                            _ => self.state.low.push_back(key),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn log_error(&mut self, url: &str, message: &str, clock: &dyn Clock) {
        tracing::warn!(url, message, "page failed");
        self.state.errors.push(ErrorEntry { timestamp: clock.now_utc().to_rfc3339(), url: url.to_owned(), message: message.to_owned() });
    }

    /// Extracts text for every stored page, strips boilerplate across the
    /// institution, and writes text files, the manifest and the logs.
    pub fn finish(self, prior: Option<&Manifest>) -> Result<CrawlResult, CorpusError> {
        let ok: Vec<&PageRecord> = self.state.records.iter().filter(|r| r.status == PageStatus::Ok).collect();
        let mut texts = Vec::with_capacity(ok.len());
        for r in &ok {
            let p = self.inst_dir.join(r.html_path.as_ref().expect("ok pages have html"));
            let html = fs::read_to_string(&p).map_err(|e| CorpusError::io(&p, e))?;
            texts.push(extract_page_text(&html));
        }
        for (r, st) in ok.iter().zip(remove_boilerplate(&texts)) {
            let p = self.inst_dir.join(r.text_path.as_ref().expect("ok pages have text"));
            write_atomic(&p, st.render().as_bytes())?;
        }
        let log: String = self.state.errors.iter().map(|e| format!("{}\t{}\t{}\n", e.timestamp, e.url, e.message)).collect();
        write_atomic(&self.inst_dir.join("errors.log"), log.as_bytes())?;
        let ext: String = self.state.external.iter().map(|u| format!("{u}\n")).collect();
        write_atomic(&self.inst_dir.join("external.log"), ext.as_bytes())?;
        let manifest = write_manifest(
            &self.inst_dir,
            &self.cfg.crawl_version,
            &self.state.domain,
            &self.state.seed_url,
            &self.state.records,
            prior,
        )?;
        Ok(CrawlResult {
            domain: self.state.domain,
            inst_dir: self.inst_dir,
            records: self.state.records,
            fetch_log: self.state.fetch_log,
            visit_classes: self.state.visit_classes,
            external: self.state.external,
            manifest,
        })
    }
}

/// `<out>/<version>/<sanitized domain>`
pub fn institution_dir(out_root: &Path, version: &str, seed: &Url) -> Result<PathBuf, CorpusError> {
    let domain = site_domain(seed).ok_or_else(|| CorpusError::BadSeed(seed.to_string()))?;
    Ok(out_root.join(version).join(sanitize(&domain)))
}

/// Crawls one institution to completion, resuming from `checkpoint` when the
/// file exists and rewriting it after every page.
pub fn crawl_institution(
    seed: &Url,
    cfg: &CrawlConfig,
    fetcher: &dyn Fetcher,
    clock: &dyn Clock,
    out_root: &Path,
    checkpoint: Option<&Path>,
) -> Result<CrawlResult, CorpusError> {
    let inst_dir = institution_dir(out_root, &cfg.crawl_version, seed)?;
    let mut crawl = match checkpoint.filter(|p| p.exists()) {
        Some(p) => InstitutionCrawl::from_checkpoint(InstitutionCrawl::load_checkpoint(p)?, cfg, &inst_dir)?,
        None => InstitutionCrawl::new(seed, cfg, &inst_dir)?,
    };
    while crawl.step(fetcher, clock)?.is_some() {
        if let Some(p) = checkpoint {
            crawl.save_checkpoint(p)?;
        }
    }
    let dir_name = inst_dir.file_name().expect("institution dir has a name").to_string_lossy().into_owned();
    let prior = find_prior_manifest(out_root, &cfg.crawl_version, &dir_name);
    crawl.finish(prior.as_ref())
}

/// Crawls several institutions with at most `max_concurrent_institutions`
/// in flight. Results keep the order of `seeds`.
pub fn crawl_institutions(
    seeds: &[Url],
    cfg: &CrawlConfig,
    fetcher: &dyn Fetcher,
    make_clock: &(dyn Fn() -> Box<dyn Clock> + Sync),
    out_root: &Path,
    checkpoint_dir: Option<&Path>,
) -> Vec<Result<CrawlResult, CorpusError>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CrawlResult, CorpusError>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    let workers = cfg.max_concurrent_institutions.min(seeds.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(seed) = seeds.get(i) else { break };
                let clock = make_clock();
                let cp = checkpoint_dir.map(|d| d.join(format!("{}.checkpoint.json", sanitize(seed.as_str()))));
                let r = crawl_institution(seed, cfg, fetcher, clock.as_ref(), out_root, cp.as_deref());
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every seed crawled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use crate::corpus::sim::SimulatedSite;

    fn kw() -> Vec<String> {
        CrawlConfig::default().priority_keywords
    }

    fn u(s: &str) -> Url {
        Url::parse(s).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_link(&u("https://uni.edu/apply/deadlines"), "", &kw(), "uni.edu"), LinkClass::High);
        assert_eq!(classify_link(&u("https://uni.edu/athletics/schedule"), "Schedule", &kw(), "uni.edu"), LinkClass::Low);
        assert_eq!(classify_link(&u("https://other.org/deadlines"), "", &kw(), "uni.edu"), LinkClass::Excluded);
        assert_eq!(classify_link(&u("https://uni.edu/viewbook.PDF"), "", &kw(), "uni.edu"), LinkClass::Excluded);
        assert_eq!(classify_link(&u("https://www.admit.uni.edu/x"), "Financial  Aid", &kw(), "uni.edu"), LinkClass::High);
        assert_eq!(classify_link(&u("https://uni.edu/financial-aid/"), "", &kw(), "uni.edu"), LinkClass::High);
        assert_eq!(classify_link(&u("https://notuni.edu/x"), "", &kw(), "uni.edu"), LinkClass::Excluded);
    }

    #[test]
    fn url_normalization() {
        let n = normalize_url(&u("HTTPS://WWW.Uni.EDU/a/../b?q=1#frag"));
        assert_eq!(n.as_str(), "https://www.uni.edu/b?q=1");
    }

    #[test]
    fn config_validation() {
        assert!(CrawlConfig::default().validate().is_ok());
        let bad = CrawlConfig { delay_range_s: (15.0, 8.0), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = CrawlConfig { crawl_version: "../x".into(), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn small_site() -> SimulatedSite {
        let site = SimulatedSite::new();
        site.add_page(
            "https://uni.edu/",
            r#"<title>Home</title>
               <a href="/athletics">Athletics</a>
               <a href="/apply/deadlines">Dates</a>
               <a href="/campus">Campus</a>
               <a href="/aid">Financial Aid</a>
               <a href="/clubs">Clubs</a>"#,
        );
        for p in ["athletics", "apply/deadlines", "campus", "aid", "clubs"] {
            site.add_page(&format!("https://uni.edu/{p}"), &format!("<title>{p}</title><p>About {p}.</p>"));
        }
        site
    }

    #[test]
    fn high_links_first_under_budget() {
        let dir = tempfile::tempdir().unwrap();
        let site = small_site();
        let cfg = CrawlConfig { max_pages: 3, ..Default::default() };
        let res = crawl_institution(&u("https://uni.edu/"), &cfg, &site, &VirtualClock::new(), dir.path(), None).unwrap();
        let urls: Vec<&str> = res.records.iter().map(|r| r.url.as_str()).collect();
        assert_eq!(urls, ["https://uni.edu/", "https://uni.edu/apply/deadlines", "https://uni.edu/aid"]);
    }

    #[test]
    fn retries_then_marks_failed() {
        let dir = tempfile::tempdir().unwrap();
        let site = small_site();
        site.fail_times("https://uni.edu/athletics", 10);
        site.fail_times("https://uni.edu/campus", 2);
        let clock = VirtualClock::new();
        let res = crawl_institution(&u("https://uni.edu/"), &CrawlConfig::default(), &site, &clock, dir.path(), None).unwrap();
        let ath = res.records.iter().find(|r| r.url.ends_with("/athletics")).unwrap();
        assert_eq!(ath.status, PageStatus::Failed);
        assert_eq!(res.fetch_log.iter().filter(|e| e.url.ends_with("/athletics")).count(), 4);
        let campus = res.records.iter().find(|r| r.url.ends_with("/campus")).unwrap();
        assert_eq!(campus.status, PageStatus::Ok);
        // Backoff adds 1s then 2s on top of the politeness delay.
        let attempts: Vec<&FetchEvent> = res.fetch_log.iter().filter(|e| e.url.ends_with("/campus")).collect();
        let gap1 = attempts[1].at - attempts[0].at;
        let gap2 = attempts[2].at - attempts[1].at;
        assert!((9.0..=16.0).contains(&gap1), "{gap1}");
        assert!((10.0..=17.0).contains(&gap2), "{gap2}");
        let log = fs::read_to_string(res.inst_dir.join("errors.log")).unwrap();
        assert_eq!(log.lines().count(), 1);
        assert!(log.contains("https://uni.edu/athletics"));
        assert!(res.records.iter().all(|r| r.verify(&res.inst_dir)));
    }

    #[test]
    fn unreachable_seed() {
        let dir = tempfile::tempdir().unwrap();
        let site = SimulatedSite::new();
        let err = crawl_institution(&u("https://gone.edu/"), &CrawlConfig::default(), &site, &VirtualClock::new(), dir.path(), None);
        assert!(matches!(err, Err(CorpusError::SeedUnreachable { .. })));
    }

    #[test]
    fn text_files_and_logs_written() {
        let dir = tempfile::tempdir().unwrap();
        let site = SimulatedSite::university("uni.edu", 12);
        let res = crawl_institution(&u("https://uni.edu/"), &CrawlConfig::default(), &site, &VirtualClock::new(), dir.path(), None).unwrap();
        assert_eq!(res.records.len(), 12);
        assert_eq!(res.inst_dir, dir.path().join("v1").join("uni.edu"));
        for r in &res.records {
            let text = fs::read_to_string(res.inst_dir.join(r.text_path.as_ref().unwrap())).unwrap();
            assert!(!text.contains("All rights reserved"), "footer survived in {}", r.url);
            assert!(!text.is_empty());
        }
        assert!(res.external.iter().any(|e| e.ends_with(".pdf")));
        assert!(res.external.iter().any(|e| e.contains("example.org")));
    }

    #[test]
    fn concurrent_institutions_keep_seed_order() {
        let dir = tempfile::tempdir().unwrap();
        let site = SimulatedSite::new();
        for d in ["a.edu", "b.edu", "c.edu", "d.edu"] {
            site.merge(SimulatedSite::university(d, 5));
        }
        let seeds: Vec<Url> = ["a.edu", "b.edu", "c.edu", "d.edu"].iter().map(|d| u(&format!("https://{d}/"))).collect();
        let make = || Box::new(VirtualClock::new()) as Box<dyn Clock>;
        let res = crawl_institutions(&seeds, &CrawlConfig::default(), &site, &make, dir.path(), None);
        let domains: Vec<String> = res.into_iter().map(|r| r.unwrap().domain).collect();
        assert_eq!(domains, ["a.edu", "b.edu", "c.edu", "d.edu"]);
    }

    #[test]
    fn resume_skips_visited_pages() {
        let seed = u("https://uni.edu/");
        let cfg = CrawlConfig::default();

        let full_dir = tempfile::tempdir().unwrap();
        let full_site = SimulatedSite::university("uni.edu", 60);
        let full = crawl_institution(&seed, &cfg, &full_site, &VirtualClock::new(), full_dir.path(), None).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("cp.json");
        let site = SimulatedSite::university("uni.edu", 60);
        let clock = VirtualClock::new();
        let inst = institution_dir(dir.path(), "v1", &seed).unwrap();
        let mut crawl = InstitutionCrawl::new(&seed, &cfg, &inst).unwrap();
        for _ in 0..10 {
            crawl.step(&site, &clock).unwrap();
            crawl.save_checkpoint(&cp).unwrap();
        }
        drop(crawl);
        let before = site.calls();
        assert_eq!(before.len(), 10);
        let resumed = crawl_institution(&seed, &cfg, &site, &clock, dir.path(), Some(&cp)).unwrap();
        let after = &site.calls()[10..];
        assert!(after.iter().all(|c| !before.contains(c)));
        assert_eq!(resumed.fetch_log, full.fetch_log);
        assert_eq!(resumed.records, full.records);
    }

    #[test]
    fn recrawl_flags_changes() {
        let dir = tempfile::tempdir().unwrap();
        let seed = u("https://uni.edu/");
        let site = SimulatedSite::university("uni.edu", 8);
        let v1 = crawl_institution(&seed, &CrawlConfig::default(), &site, &VirtualClock::new(), dir.path(), None).unwrap();
        assert!(v1.manifest.pages.iter().all(|p| p.changed));
        let cfg2 = CrawlConfig { crawl_version: "v2".into(), ..Default::default() };
        let v2 = crawl_institution(&seed, &cfg2, &site, &VirtualClock::new(), dir.path(), None).unwrap();
        assert!(v2.manifest.pages.iter().all(|p| !p.changed));
        let target = v1.records[3].url.clone();
        site.add_page(&target, "<title>Changed</title><p>New text.</p>");
        let cfg3 = CrawlConfig { crawl_version: "v3".into(), ..Default::default() };
        let v3 = crawl_institution(&seed, &cfg3, &site, &VirtualClock::new(), dir.path(), None).unwrap();
        let changed: Vec<&str> = v3.manifest.pages.iter().filter(|p| p.changed).map(|p| p.record.url.as_str()).collect();
        assert_eq!(changed, [target.as_str()]);
    }
}
