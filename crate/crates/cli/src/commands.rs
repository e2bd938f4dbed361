use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::Serialize;
use url::Url;

use groundform_core::answer::{fill_form, FillConfig};
use groundform_core::chunker::{chunk_personal, chunk_text, Chunk, ChunkConfig, SourceMeta, SourceType};
use groundform_core::clock::{Clock, SystemClock};
use groundform_core::condlogic::FormState;
use groundform_core::corpus::crawl::{crawl_institutions, CrawlConfig};
use groundform_core::corpus::manifest::{read_manifest, PageStatus, MANIFEST_FILE};
use groundform_core::fixtures::reference_schema;
use groundform_core::index::lexical::read_chunks_jsonl;
use groundform_core::index::LexicalIndex;
use groundform_core::model::DeterministicExtractor;
use groundform_core::schema::{load_schema, CanonicalSchema};
use groundform_core::synthgen::{generate_batch, read_seed_csv, sample_seed, write_packages};
use groundform_service::{AppState, ServiceConfig};

use crate::args::{CrawlArgs, EvalArgs, FillArgs, IndexArgs, IngestArgs, ServeArgs, SynthArgs};
use crate::eval::{evaluate, Floors};
use crate::fetch::HttpFetcher;
use crate::forms::{builtin_forms, check_against, parse_forms, FillRun, FormRun, ItemTruth};
use crate::{existing, failed, CliError, CmdResult};

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

fn load_schema_arg(path: Option<&Path>) -> Result<CanonicalSchema, CliError> {
    match path {
        None => Ok(reference_schema()),
        Some(p) => {
            existing(p, "schema")?;
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            load_schema(&bytes).map_err(|e| failed(format!("{}: {e}", p.display())))
        }
    }
}

fn load_index(dir: &Path) -> Result<LexicalIndex, CliError> {
    existing(dir, "index")?;
    LexicalIndex::load(dir).map_err(|e| failed(format!("loading index: {e}")))
}

/// Files under `dir` in path order.
fn walk_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            out.extend(walk_files(&p)?);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct CrawlSummary {
    seed: String,
    name: Option<String>,
    domain: Option<String>,
    pages_ok: usize,
    pages_failed: usize,
    manifest: Option<String>,
    error: Option<String>,
}

fn read_seeds(path: &Path) -> Result<Vec<(Option<String>, Url)>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| CliError::Usage(e.to_string()))?.clone();
    let url_col = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("url"))
        .ok_or_else(|| CliError::Usage(format!("{}: no `url` column", path.display())))?;
    let name_col = headers.iter().position(|h| h.trim().eq_ignore_ascii_case("name"));
    let mut seeds = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let raw = rec.get(url_col).unwrap_or("").trim();
        let url = Url::parse(raw).map_err(|e| CliError::Usage(format!("{} row {}: `{raw}`: {e}", path.display(), i + 1)))?;
        seeds.push((name_col.and_then(|c| rec.get(c)).map(|s| s.trim().to_owned()), url));
    }
    Ok(seeds)
}

pub fn crawl(a: &CrawlArgs) -> CmdResult {
    existing(&a.seeds, "seeds file")?;
    let seeds = read_seeds(&a.seeds)?;
    if seeds.is_empty() {
        return Err(failed(format!("{} lists no institutions", a.seeds.display())));
    }
    let cfg = CrawlConfig {
        max_pages: a.max_pages,
        delay_range_s: (a.min_delay, a.max_delay),
        max_retries: a.max_retries,
        max_concurrent_institutions: a.concurrency,
        crawl_version: a.version.clone(),
        rng_seed: a.seed,
        ..Default::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(dir) = &a.checkpoints {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let fetcher = HttpFetcher::new(Duration::from_secs(a.timeout_s));
    let urls: Vec<Url> = seeds.iter().map(|(_, u)| u.clone()).collect();
    let make_clock = || Box::new(SystemClock) as Box<dyn Clock>;
    let results = crawl_institutions(&urls, &cfg, &fetcher, &make_clock, &a.out, a.checkpoints.as_deref());

    let mut summary = Vec::new();
    for ((name, url), result) in seeds.into_iter().zip(results) {
        summary.push(match result {
            Ok(r) => CrawlSummary {
                seed: url.to_string(),
                name,
                pages_ok: r.ok_pages(),
                pages_failed: r.records.len() - r.ok_pages(),
                manifest: Some(r.inst_dir.join(MANIFEST_FILE).display().to_string()),
                domain: Some(r.domain),
                error: None,
            },
            Err(e) => {
                tracing::error!(seed = %url, error = %e, "institution failed");
                CrawlSummary {
                    seed: url.to_string(),
                    name,
                    domain: None,
                    pages_ok: 0,
                    pages_failed: 0,
                    manifest: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }
    print_json(&summary);
    if summary.iter().all(|s| s.error.is_some()) {
        return Err(failed("no institution was crawled"));
    }
    Ok(())
}

pub fn ingest(a: &IngestArgs) -> CmdResult {
    existing(&a.docs, "documents directory")?;
    let fixed_time = match &a.timestamp {
        None => None,
        Some(t) => Some(
            DateTime::parse_from_rfc3339(t)
                .map_err(|e| CliError::Usage(format!("--timestamp `{t}`: {e}")))?
                .with_timezone(&Utc),
        ),
    };
    let files = walk_files(&a.docs).with_context(|| format!("reading {}", a.docs.display()))?;
    let docs: Vec<&PathBuf> =
        files.iter().filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("txt" | "md"))).collect();
    let mut chunks = Vec::new();
    for p in &docs {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let name = p.strip_prefix(&a.docs).unwrap_or(p).components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        let uploaded = match fixed_time {
            Some(t) => t,
            None => fs::metadata(p).and_then(|m| m.modified()).map(DateTime::<Utc>::from).unwrap_or_default(),
        };
        chunks.extend(chunk_personal(&a.user, &name, &text, &ChunkConfig::default(), uploaded));
    }
    if chunks.is_empty() {
        return Err(failed(format!("no text found under {}", a.docs.display())));
    }
    let mut out = String::new();
    for c in &chunks {
        out.push_str(&serde_json::to_string(c).expect("chunk serializes"));
        out.push('\n');
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&a.out, out).with_context(|| format!("writing {}", a.out.display()))?;
    tracing::info!(documents = docs.len(), chunks = chunks.len(), "ingested");
    print_json(&serde_json::json!({"documents": docs.len(), "chunks": chunks.len(), "out": a.out.display().to_string()}));
    Ok(())
}

/// Source tier of a crawled page, guessed from its URL.
pub fn public_source_type(url: &str) -> SourceType {
    let u = url.to_ascii_lowercase();
    if u.contains("faq") || u.contains("questions") {
        SourceType::Faq
    } else if ["forum", "community", "blog", "reddit", "discussion"].iter().any(|k| u.contains(k)) {
        SourceType::Community
    } else {
        SourceType::Official
    }
}

/// Chunks every stored page of one crawled institution.
fn chunk_crawl(manifest_path: &Path) -> Result<Vec<Chunk>, CliError> {
    let manifest = read_manifest(manifest_path).map_err(|e| failed(e.to_string()))?;
    let inst_dir = manifest_path.parent().expect("manifest has a parent");
    let mut out = Vec::new();
    for entry in &manifest.pages {
        let r = &entry.record;
        let Some(text_path) = r.text_path.as_ref().filter(|_| r.status == PageStatus::Ok) else { continue };
        let p = inst_dir.join(text_path);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let meta = SourceMeta {
            institution: manifest.institution.clone(),
            page_id: r.page_id.clone(),
            source_url: r.url.clone(),
            page_title: r.title.clone(),
            source_type: public_source_type(&r.url),
            crawl_timestamp: r.fetched_at,
            owner: None,
        };
        out.extend(chunk_text(&text, &ChunkConfig::default(), &meta));
    }
    Ok(out)
}

fn collect_chunks(corpus: &Path, skip: &Path) -> Result<Vec<Chunk>, CliError> {
    let jsonl = |p: &Path| read_chunks_jsonl(p).map_err(|e| failed(e.to_string()));
    if corpus.is_file() {
        return jsonl(corpus);
    }
    let mut chunks = Vec::new();
    for p in walk_files(corpus).with_context(|| format!("reading {}", corpus.display()))? {
        if p.starts_with(skip) {
            continue;
        }
        let is_manifest = p.file_name().is_some_and(|n| n == MANIFEST_FILE) && p.with_file_name("pages").is_dir();
        if is_manifest {
            chunks.extend(chunk_crawl(&p)?);
        } else if p.extension().is_some_and(|e| e == "jsonl") {
            chunks.extend(jsonl(&p)?);
        }
    }
    Ok(chunks)
}

pub fn index(a: &IndexArgs) -> CmdResult {
    existing(&a.corpus, "corpus")?;
    let chunks = collect_chunks(&a.corpus, &a.index)?;
    if chunks.is_empty() {
        return Err(failed(format!("no chunks or crawled pages under {}", a.corpus.display())));
    }
    let mut idx = if a.index.exists() { load_index(&a.index)? } else { LexicalIndex::new() };
    let stats = idx.index_chunks(chunks).map_err(|e| failed(format!("indexing: {e}")))?;
    idx.save(&a.index).map_err(|e| failed(e.to_string()))?;
    tracing::info!(added = stats.added, total = stats.total, "indexed");
    print_json(&serde_json::json!({"added": stats.added, "total": stats.total, "fingerprint": idx.fingerprint()}));
    Ok(())
}

pub fn fill(a: &FillArgs) -> CmdResult {
    let forms = match a.form.strip_prefix("builtin:") {
        Some(name) => builtin_forms(name).ok_or_else(|| CliError::Usage(format!("no bundled form `{name}`; try general or schools")))?,
        None => {
            let p = Path::new(&a.form);
            existing(p, "form file")?;
            let json = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_forms(&json).map_err(|e| failed(format!("{}: {e}", p.display())))?
        }
    };
    let schema = load_schema_arg(a.schema.as_deref())?;
    let problems: Vec<String> = forms.iter().flat_map(|f| check_against(f, &schema)).collect();
    if !problems.is_empty() {
        for p in &problems {
            tracing::error!("{p}");
        }
        return Err(failed(format!("form does not match schema {}: {}", schema.version, problems.join("; "))));
    }
    let index = load_index(&a.index)?;
    let cfg = FillConfig { top_k: a.top_k, user: a.user.clone(), include_public: a.include_public, ..Default::default() };
    let mut runs = Vec::new();
    for form in &forms {
        let items: Vec<_> = form.items.iter().map(|i| i.form_item()).collect();
        let known = FormState::with_values(form.known.clone());
        let report = fill_form(&items, &known, &index, &schema, &DeterministicExtractor, &cfg).map_err(|e| failed(format!("{}: {e}", form.name)))?;
        tracing::info!(form = %form.name, visible = report.visible, filled = report.filled, "filled");
        runs.push(FormRun {
            name: form.name.clone(),
            note: report.fill_rate.is_none().then(|| "no-visible-fields".to_owned()),
            truth: form.items.iter().map(|i| ItemTruth { expected_field: i.expected_field.clone(), answerable: i.answerable }).collect(),
            report,
        });
    }
    let run = FillRun {
        schema_version: schema.version.clone(),
        index: a.index.display().to_string(),
        index_fingerprint: index.fingerprint(),
        user: a.user.clone(),
        forms: runs,
    };
    write_json(&a.out, &run)?;
    let summary: Vec<_> = run
        .forms
        .iter()
        .map(|f| serde_json::json!({"form": f.name, "visible": f.report.visible, "filled": f.report.filled, "fill_rate": f.report.fill_rate, "note": f.note}))
        .collect();
    print_json(&summary);
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    existing(&a.report, "fill report")?;
    let json = fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let run: FillRun = serde_json::from_str(&json).map_err(|e| failed(format!("{}: {e}", a.report.display())))?;
    let index_dir = a.index.clone().unwrap_or_else(|| PathBuf::from(&run.index));
    let index = load_index(&index_dir)?;
    if index.fingerprint() != run.index_fingerprint {
        tracing::warn!(index = %index_dir.display(), "index changed since the report was written");
    }
    let schema = load_schema_arg(a.schema.as_deref())?;
    let floors = Floors {
        fill_rate: a.min_fill_rate,
        citation_present_rate: a.min_citation_present,
        citation_valid_rate: a.min_citation_valid,
        conditional_rate: a.min_conditional,
    };
    let report = evaluate(&run, &index, &schema, floors);
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    print_json(&report);
    if report.passed() {
        Ok(())
    } else {
        Err(failed(format!("below floor: {}", report.below_floor.join(", "))))
    }
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    let seeds = match &a.students {
        Some(p) => {
            existing(p, "students file")?;
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_seed_csv(f, a.seed).map_err(|e| failed(format!("{}: {e}", p.display())))?
        }
        None => (0..a.n as u64).map(|i| sample_seed(a.seed.wrapping_add(i))).collect(),
    };
    if a.max_attempts == 0 {
        return Err(CliError::Usage("--max-attempts must be positive".into()));
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let outcome = generate_batch(&seeds, a.max_attempts, &|_, _| false);
    let dirs = write_packages(&a.out, &outcome.packages).map_err(|e| failed(e.to_string()))?;
    let rel: Vec<String> = dirs.iter().map(|d| d.strip_prefix(&a.out).unwrap_or(d).display().to_string()).collect();
    print_json(&serde_json::json!({
        "packages": outcome.packages.len(),
        "attempts": outcome.attempts,
        "shortfall": outcome.shortfall,
        "dirs": rel,
    }));
    if outcome.shortfall.is_empty() {
        Ok(())
    } else {
        Err(failed(format!("{} of {} packages could not be generated", outcome.shortfall.len(), seeds.len())))
    }
}

fn read_users(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    existing(path, "users file")?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut users = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        match (rec.get(0), rec.get(1)) {
            (Some(u), Some(s)) if !u.trim().is_empty() && !s.is_empty() => users.push((u.trim().to_owned(), s.to_owned())),
            _ => return Err(CliError::Usage(format!("{}: rows need user_id and secret", path.display()))),
        }
    }
    Ok(users)
}

pub fn serve(a: &ServeArgs) -> CmdResult {
    if a.signing_key.len() < 16 {
        return Err(CliError::Usage("signing key must be at least 16 bytes".into()));
    }
    let users = read_users(&a.users)?;
    let schema = load_schema_arg(a.schema.as_deref())?;
    let index = if a.index.exists() { load_index(&a.index)? } else { LexicalIndex::new() };
    let cfg = ServiceConfig { token_ttl_s: a.token_ttl_s, ..Default::default() };
    let mut state = AppState::new(schema, index, Arc::new(DeterministicExtractor), a.signing_key.as_bytes())
        .and_then(|s| s.with_config(cfg))
        .map_err(|e| failed(e.to_string()))?;
    for (u, s) in &users {
        state = state.with_user(u, s);
    }
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(groundform_service::serve(state, a.addr)).with_context(|| format!("serving on {}", a.addr))?;
    Ok(())
}
