use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "groundform", version, about = "Grounded application form filling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl institution websites listed in a seeds CSV.
    Crawl(CrawlArgs),
    /// Chunk a directory of personal documents into a JSONL file.
    Ingest(IngestArgs),
    /// Add crawled pages or chunk files to an index.
    Index(IndexArgs),
    /// Fill one or more forms and write a fill report.
    Fill(FillArgs),
    /// Score a fill report.
    Eval(EvalArgs),
    /// Generate synthetic student packages.
    Synth(SynthArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CrawlArgs {
    /// CSV with a `url` column and an optional `name` column.
    #[arg(long)]
    pub seeds: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub max_pages: usize,
    #[arg(long, default_value = "v1")]
    pub version: String,
    /// Lower bound of the pause between requests, in seconds.
    #[arg(long, default_value_t = 8.0)]
    pub min_delay: f64,
    #[arg(long, default_value_t = 15.0)]
    pub max_delay: f64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 3)]
    pub concurrency: usize,
    /// Seeds the delay draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for per-institution checkpoints; an interrupted crawl resumes from them.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub timeout_s: u64,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Directory searched recursively for .txt and .md files.
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub user: String,
    #[arg(long, default_value = "chunks.jsonl")]
    pub out: PathBuf,
    /// Upload time stamped on every chunk (RFC 3339). Defaults to each file's modification time.
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct IndexArgs {
    /// A chunk JSONL file, or a directory holding crawl output and/or JSONL files.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Index directory; created when missing, extended otherwise.
    #[arg(long, default_value = "index")]
    pub index: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FillArgs {
    /// Form JSON file, or `builtin:general` / `builtin:schools`.
    #[arg(long)]
    pub form: String,
    #[arg(long)]
    pub user: Option<String>,
    #[arg(long, default_value = "index")]
    pub index: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Canonical schema JSON; the bundled reference schema by default.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Fall back to public sources when the user's documents have nothing.
    #[arg(long)]
    pub include_public: bool,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Index to check citations against; defaults to the one the report was filled from.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Also write the evaluation here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.80)]
    pub min_fill_rate: f64,
    #[arg(long, default_value_t = 0.95)]
    pub min_citation_present: f64,
    #[arg(long, default_value_t = 1.0)]
    pub min_citation_valid: f64,
    /// Share of conditional cases that must pass.
    #[arg(long, default_value_t = 1.0)]
    pub min_conditional: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 30, conflicts_with = "students")]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed CSV; one package per row instead of sampled seeds.
    #[arg(long)]
    pub students: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value = "index")]
    pub index: PathBuf,
    /// CSV with `user_id,secret` rows.
    #[arg(long)]
    pub users: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Token signing key.
    #[arg(long, env = "GROUNDFORM_SIGNING_KEY", hide_env_values = true)]
    pub signing_key: String,
    #[arg(long, default_value_t = 3600)]
    pub token_ttl_s: u64,
}
