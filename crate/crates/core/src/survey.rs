//! Usage survey of plotting functions over a code-search API.
//!
//! One query per function, `<namespace>.<function>(`, counting total
//! matches. Responses are cached on disk by query hash, and rate-limit
//! responses are retried with exponential backoff.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TOKEN_ENV: &str = "SURVEY_API_TOKEN";
pub const MAX_RETRIES: u32 = 3;
const SEARCH_URL: &str = "https://api.github.com/search/code";

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("no functions to survey")]
    NoFunctions,
    #[error("rate limited on {query:?} after {retries} retries")]
    RateLimited { query: String, retries: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response for {query:?}: {reason}")]
    BadResponse { query: String, reason: String },
    #[error("{query:?} is not cached and live queries are off")]
    CacheMiss { query: String },
    #[error("cache i/o error on {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResponse {
    pub status: u16,
    pub body: String,
}

pub trait SearchTransport {
    fn search(&self, query: &str) -> Result<SearchResponse, SurveyError>;
}

pub trait Sleeper {
    fn sleep(&self, duration: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Refuses every query; for cache-only runs.
pub struct OfflineTransport;

impl SearchTransport for OfflineTransport {
    fn search(&self, query: &str) -> Result<SearchResponse, SurveyError> {
        Err(SurveyError::CacheMiss { query: query.into() })
    }
}

/// GitHub code search.
pub struct GitHubTransport {
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl GitHubTransport {
    pub fn new(token: Option<String>) -> Result<Self, SurveyError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(concat!("plotmorph-survey/", env!("CARGO_PKG_VERSION")))
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| SurveyError::Transport(e.to_string()))?;
        Ok(GitHubTransport { client, token })
    }

    pub fn from_env() -> Result<Self, SurveyError> {
        Self::new(std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()))
    }
}

impl SearchTransport for GitHubTransport {
    fn search(&self, query: &str) -> Result<SearchResponse, SurveyError> {
        let quoted = format!("\"{query}\"");
        let url = url::Url::parse_with_params(SEARCH_URL, [("q", quoted.as_str()), ("per_page", "1")])
            .map_err(|e| SurveyError::Transport(e.to_string()))?;
        let mut req = self
            .client
            .get(url)
            .header("Accept", "application/vnd.github+json");
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| SurveyError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| SurveyError::Transport(e.to_string()))?;
        Ok(SearchResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyRow {
    pub function: String,
    pub match_count: u64,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyResult {
    /// By `match_count` descending, then function name ascending.
    pub rows: Vec<SurveyRow>,
    /// Seconds since the Unix epoch.
    pub fetched_at: u64,
    pub cache_hits: usize,
}

pub fn query_for(namespace: &str, function: &str) -> String {
    format!("{namespace}.{function}(")
}

pub fn cache_path(cache_dir: &Path, query: &str) -> PathBuf {
    cache_dir.join(format!("{}.json", hex::encode(Sha256::digest(query.as_bytes()))))
}

fn total_count(query: &str, body: &str) -> Result<u64, SurveyError> {
    let bad = |reason: String| SurveyError::BadResponse {
        query: query.into(),
        reason,
    };
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| bad(e.to_string()))?;
    v.get("total_count")
        .and_then(|c| c.as_u64())
        .ok_or_else(|| bad("missing non-negative integer total_count".into()))
}

fn fetch(transport: &dyn SearchTransport, sleeper: &dyn Sleeper, query: &str) -> Result<String, SurveyError> {
    let mut retries = 0;
    loop {
        let resp = transport.search(query)?;
        match resp.status {
            200 => return Ok(resp.body),
            403 | 429 if retries < MAX_RETRIES => {
                sleeper.sleep(Duration::from_secs(1 << retries));
                retries += 1;
            }
            403 | 429 => {
                return Err(SurveyError::RateLimited {
                    query: query.into(),
                    retries,
                })
            }
            other => return Err(SurveyError::Transport(format!("HTTP {other} for {query:?}"))),
        }
    }
}

/// Queries each function once, consulting and filling `cache_dir` when set.
pub fn survey<S: AsRef<str>>(
    functions: &[S],
    namespace: &str,
    transport: &dyn SearchTransport,
    sleeper: &dyn Sleeper,
    cache_dir: Option<&Path>,
) -> Result<SurveyResult, SurveyError> {
    if functions.is_empty() {
        return Err(SurveyError::NoFunctions);
    }
    let mut rows = Vec::with_capacity(functions.len());
    let mut cache_hits = 0;
    for f in functions {
        let function = f.as_ref();
        let query = query_for(namespace, function);
        let cached = cache_dir.map(|d| cache_path(d, &query)).filter(|p| p.is_file());
        let count = match cached {
            Some(path) => {
                let body = std::fs::read_to_string(&path).map_err(|source| SurveyError::Cache { path, source })?;
                cache_hits += 1;
                total_count(&query, &body)?
            }
            None => {
                let body = fetch(transport, sleeper, &query)?;
                let count = total_count(&query, &body)?;
                if let Some(dir) = cache_dir {
                    std::fs::create_dir_all(dir).map_err(|source| SurveyError::Cache {
                        path: dir.to_path_buf(),
                        source,
                    })?;
                    let path = cache_path(dir, &query);
                    std::fs::write(&path, &body).map_err(|source| SurveyError::Cache { path, source })?;
                }
                count
            }
        };
        rows.push(SurveyRow {
            function: function.to_string(),
            match_count: count,
            query,
        });
    }
    rows.sort_by(|a, b| b.match_count.cmp(&a.match_count).then_with(|| a.function.cmp(&b.function)));
    let fetched_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Ok(SurveyResult {
        rows,
        fetched_at,
        cache_hits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub fn render_report(result: &SurveyResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(["function", "match_count"]).expect("in-memory write");
            for r in &result.rows {
                w.write_record([r.function.as_str(), &r.match_count.to_string()])
                    .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        ReportFormat::Markdown => {
            let mut out = String::from("| function | match_count |\n|---|---:|\n");
            for r in &result.rows {
                out.push_str(&format!("| {} | {} |\n", r.function.replace('|', "\\|"), r.match_count));
            }
            out
        }
    }
}
