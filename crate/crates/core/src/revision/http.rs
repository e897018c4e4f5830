//! Rate-limited, retrying HTTP GET with an on-disk response cache.
//!
//! Every network client in the crate (MediaWiki, publication-date lookup,
//! page fetching) goes through [`HttpFetcher`] so that they share one token
//! bucket and one cache, and so that a run can be replayed offline.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("network failure fetching {url} after {attempts} attempt(s): {message}")]
    Network { url: String, attempts: u32, message: String },
    #[error("rate limited by {url} after {attempts} attempt(s)")]
    RateLimited { url: String, attempts: u32 },
    #[error("HTTP {status} from {url}")]
    Status { url: String, status: u16 },
    #[error("offline mode: no cached response for {url}")]
    Offline { url: String },
    #[error("cache I/O error: {0}")]
    Cache(#[from] io::Error),
}

impl HttpError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, HttpError::Network { .. } | HttpError::RateLimited { .. })
    }
}

/// Token bucket shared by concurrent callers.
#[derive(Debug)]
pub struct RateLimiter {
    rate_per_sec: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

pub const DEFAULT_REQUESTS_PER_SEC: f64 = 10.0;

impl RateLimiter {
    pub fn new(rate_per_sec: f64) -> Self {
        let rate = rate_per_sec.max(f64::MIN_POSITIVE);
        let capacity = rate.max(1.0);
        Self { rate_per_sec: rate, capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Blocks until a token is available and takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let (tokens, last) = *state;
                let refilled = (tokens + now.duration_since(last).as_secs_f64() * self.rate_per_sec).min(self.capacity);
                if refilled >= 1.0 {
                    *state = (refilled - 1.0, now);
                    return;
                }
                *state = (refilled, now);
                Duration::from_secs_f64((1.0 - refilled) / self.rate_per_sec)
            };
            thread::sleep(wait);
        }
    }
}

impl Default for RateLimiter {
    fn default() -> Self {
        Self::new(DEFAULT_REQUESTS_PER_SEC)
    }
}

/// A cached or fresh response body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub url: String,
    pub status: u16,
    pub content_type: Option<String>,
    pub body: String,
    /// When the response was first fetched from the network.
    pub recorded_at: DateTime<Utc>,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

/// Disk cache of responses keyed by the full request (URL plus sorted
/// query parameters).
#[derive(Debug, Clone)]
pub struct HttpCache {
    dir: PathBuf,
}

impl HttpCache {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        let digest = hex::encode(Sha256::digest(key.as_bytes()));
        self.dir.join(&digest[..2]).join(format!("{digest}.json"))
    }

    pub fn get(&self, key: &str) -> io::Result<Option<HttpResponse>> {
        let path = self.path(key);
        match fs::read_to_string(&path) {
            Ok(s) => serde_json::from_str(&s)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &str, response: &HttpResponse) -> io::Result<()> {
        let path = self.path(key);
        fs::create_dir_all(path.parent().expect("cache path has parent"))?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(response)?)?;
        fs::rename(tmp, path)
    }
}

/// Retry policy for transient failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_backoff: Duration::from_millis(500) }
    }
}

pub struct HttpFetcher {
    client: reqwest::blocking::Client,
    limiter: std::sync::Arc<RateLimiter>,
    cache: Option<HttpCache>,
    offline: bool,
    retry: RetryPolicy,
}

const USER_AGENT: &str = concat!("wiki-sentinel/", env!("CARGO_PKG_VERSION"), " (research tool)");

impl HttpFetcher {
    pub fn new(limiter: std::sync::Arc<RateLimiter>, cache: Option<HttpCache>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .user_agent(USER_AGENT)
            .timeout(Duration::from_secs(30))
            .build()
            .expect("HTTP client configuration is static");
        Self { client, limiter, cache, offline: false, retry: RetryPolicy::default() }
    }

    /// Serve only from cache; any miss is an [`HttpError::Offline`].
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn is_offline(&self) -> bool {
        self.offline
    }

    /// GET `url` with `params` appended as a query string. Successful and
    /// definitive-failure (404/410) responses are cached.
    pub fn get(&self, url: &str, params: &[(&str, &str)]) -> Result<HttpResponse, HttpError> {
        let key = cache_key(url, params);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                debug!(url, "cache hit");
                return Ok(hit);
            }
        }
        if self.offline {
            return Err(HttpError::Offline { url: key });
        }
        let response = self.fetch_with_retry(url, params, &key)?;
        if let Some(cache) = &self.cache {
            if response.is_success() || matches!(response.status, 404 | 410) {
                cache.put(&key, &response)?;
            }
        }
        Ok(response)
    }

    fn fetch_with_retry(&self, url: &str, params: &[(&str, &str)], key: &str) -> Result<HttpResponse, HttpError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire();
            let result = self.client.get(url).query(params).send();
            let backoff = self.retry.base_backoff * 2u32.saturating_pow(attempt - 1);
            match result {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 {
                        let retry_after = resp
                            .headers()
                            .get(reqwest::header::RETRY_AFTER)
                            .and_then(|v| v.to_str().ok())
                            .and_then(|v| v.parse::<u64>().ok())
                            .map(Duration::from_secs);
                        if attempt >= self.retry.max_attempts {
                            return Err(HttpError::RateLimited { url: key.to_string(), attempts: attempt });
                        }
                        warn!(url, attempt, "rate limited, backing off");
                        thread::sleep(retry_after.unwrap_or(backoff).min(Duration::from_secs(60)));
                        continue;
                    }
                    if resp.status().is_server_error() && attempt < self.retry.max_attempts {
                        warn!(url, attempt, status, "server error, retrying");
                        thread::sleep(backoff);
                        continue;
                    }
                    let content_type = resp
                        .headers()
                        .get(reqwest::header::CONTENT_TYPE)
                        .and_then(|v| v.to_str().ok())
                        .map(str::to_string);
                    let final_url = resp.url().to_string();
                    let body = resp.text().map_err(|e| HttpError::Network {
                        url: key.to_string(),
                        attempts: attempt,
                        message: e.to_string(),
                    })?;
                    return Ok(HttpResponse { url: final_url, status, content_type, body, recorded_at: Utc::now() });
                }
                Err(e) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(HttpError::Network {
                            url: key.to_string(),
                            attempts: attempt,
                            message: e.to_string(),
                        });
                    }
                    warn!(url, attempt, error = %e, "request failed, retrying");
                    thread::sleep(backoff);
                }
            }
        }
    }
}

pub(crate) fn cache_key(url: &str, params: &[(&str, &str)]) -> String {
    let mut sorted: Vec<_> = params.to_vec();
    sorted.sort();
    let query: Vec<String> = sorted.iter().map(|(k, v)| format!("{k}={v}")).collect();
    if query.is_empty() {
        url.to_string()
    } else {
        format!("{url}?{}", query.join("&"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_allows_burst_then_throttles() {
        let limiter = RateLimiter::new(50.0);
        let start = Instant::now();
        for _ in 0..60 {
            limiter.acquire();
        }
        // 50 from the initial burst, 10 more at 50/s
        assert!(start.elapsed() >= Duration::from_millis(150));
    }

    #[test]
    fn cache_round_trip_and_key_order() {
        let dir = tempfile::tempdir().unwrap();
        let cache = HttpCache::new(dir.path()).unwrap();
        let key = cache_key("http://x/api", &[("b", "2"), ("a", "1")]);
        assert_eq!(key, cache_key("http://x/api", &[("a", "1"), ("b", "2")]));
        assert!(cache.get(&key).unwrap().is_none());
        let resp = HttpResponse {
            url: "http://x/api".into(),
            status: 200,
            content_type: Some("application/json".into()),
            body: "{}".into(),
            recorded_at: Utc::now(),
        };
        cache.put(&key, &resp).unwrap();
        assert_eq!(cache.get(&key).unwrap(), Some(resp));
    }

    #[test]
    fn offline_miss_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let fetcher = HttpFetcher::new(Default::default(), Some(HttpCache::new(dir.path()).unwrap())).offline(true);
        assert!(matches!(fetcher.get("http://127.0.0.1:9/none", &[]), Err(HttpError::Offline { .. })));
    }
}
