//! Builds models, search, fetch and revision sources from a [`RunConfig`].

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;

use sentinel::agent::{FixturePageFetcher, FixtureSearchClient, GoogleSearchClient, HttpPageFetcher, PageFetcher, SearchClient};
use sentinel::eval::{EntailmentJudge, LlmJudge, NormalizedMatchJudge};
use sentinel::llm::{CassetteBackend, ChatCompletionsBackend, ChatConfig, LlmBackend, LlmError, LlmRequest};
use sentinel::mining::{extract_publication_date, DateResolver};
use sentinel::revision::http::{HttpCache, HttpFetcher, RateLimiter};
use sentinel::revision::{title_slug, FixtureRevisionSource, MediaWikiClient, RevisionSource};

use crate::config::{
    CassetteSetting, FetchKind, JudgeKind, ModelConfig, ModelKind, RevisionSourceKind, RunConfig, SearchKind, Stage,
};
use crate::mock::MockBackend;

/// Counts every request that reaches a backend (cassette hits included).
struct Counted {
    inner: Arc<dyn LlmBackend>,
    calls: Arc<AtomicUsize>,
}

impl LlmBackend for Counted {
    fn model_identifier(&self) -> &str {
        self.inner.model_identifier()
    }

    fn invoke(&self, request: &LlmRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.invoke(request)
    }
}

/// One backend per distinct model endpoint, shared by every stage using it.
pub struct ModelFactory {
    models: HashMap<Stage, ModelConfig>,
    cassette_mode: CassetteSetting,
    cassette_dir: Option<PathBuf>,
    limiter: Arc<RateLimiter>,
    built: Mutex<HashMap<String, Arc<dyn LlmBackend>>>,
    calls: Arc<AtomicUsize>,
}

const STAGES: [Stage; 8] = [
    Stage::Criteria,
    Stage::Navigator,
    Stage::Extractor,
    Stage::Aggregator,
    Stage::Editor,
    Stage::Decompose,
    Stage::Judge,
    Stage::Dataset,
];

impl ModelFactory {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let mut mode = config.llm.cassette.mode;
        if config.offline {
            if config.llm.cassette.dir.is_none() {
                bail!("--offline needs llm.cassette.dir with recorded interactions");
            }
            mode = CassetteSetting::Replay;
        }
        Ok(Self {
            models: STAGES.iter().map(|s| (*s, config.llm.for_stage(*s).clone())).collect(),
            cassette_mode: mode,
            cassette_dir: config.llm.cassette.dir.clone(),
            limiter: Arc::new(RateLimiter::new(config.llm.rate_limit)),
            built: Mutex::new(HashMap::new()),
            calls: Arc::new(AtomicUsize::new(0)),
        })
    }

    /// Requests issued by pipeline code so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn cassette_path(&self, model: &str) -> PathBuf {
        self.cassette_dir.clone().unwrap_or_default().join(format!("{}.records", title_slug(model)))
    }

    fn live(&self, m: &ModelConfig) -> Result<Arc<dyn LlmBackend>> {
        Ok(match m.kind {
            ModelKind::Mock => Arc::new(MockBackend::new(&m.model)),
            ModelKind::Chat => {
                let chat = ChatConfig {
                    base_url: m.base_url.clone(),
                    model: m.model.clone(),
                    api_key_env: m.api_key_env.clone(),
                    timeout_secs: 120,
                };
                Arc::new(ChatCompletionsBackend::new(chat, self.limiter.clone()).with_context(|| format!("model {}", m.model))?)
            }
        })
    }

    pub fn backend(&self, stage: Stage) -> Result<Arc<dyn LlmBackend>> {
        let m = &self.models[&stage];
        let key = format!("{:?}|{}|{}", m.kind, m.base_url, m.model);
        let mut built = self.built.lock().expect("model table poisoned");
        if let Some(b) = built.get(&key) {
            return Ok(b.clone());
        }
        let inner: Arc<dyn LlmBackend> = match self.cassette_mode {
            CassetteSetting::Off => self.live(m)?,
            CassetteSetting::Replay => {
                let path = self.cassette_path(&m.model);
                Arc::new(CassetteBackend::replay(&path, &m.model).with_context(|| format!("cassette {}", path.display()))?)
            }
            CassetteSetting::Record => Arc::new(CassetteBackend::record(self.cassette_path(&m.model), self.live(m)?)?),
        };
        let counted: Arc<dyn LlmBackend> = Arc::new(Counted { inner, calls: self.calls.clone() });
        built.insert(key, counted.clone());
        Ok(counted)
    }

    pub fn judge(&self, kind: JudgeKind) -> Result<Arc<dyn EntailmentJudge>> {
        Ok(match kind {
            JudgeKind::String => Arc::new(NormalizedMatchJudge),
            JudgeKind::Llm => Arc::new(LlmJudge::new(self.backend(Stage::Judge)?)),
        })
    }
}

pub type DateLookup = Arc<dyn Fn(&str) -> Option<NaiveDate> + Send + Sync>;

/// External data sources of a run.
pub struct Sources {
    pub revisions: Arc<dyn RevisionSource>,
    pub search: Arc<dyn SearchClient>,
    pub fetcher: Arc<dyn PageFetcher>,
    pub dates: DateLookup,
}

impl Sources {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let cache_dir = config.revisions.http_cache_dir.clone().unwrap_or_else(|| config.data_dir.join("http_cache"));
        let http = Arc::new(
            HttpFetcher::new(Arc::new(RateLimiter::new(config.revisions.rate_limit)), Some(HttpCache::new(&cache_dir)?))
                .offline(config.offline),
        );
        let revisions: Arc<dyn RevisionSource> = match config.revisions.kind {
            RevisionSourceKind::Mediawiki => Arc::new(MediaWikiClient::new(&config.revisions.api_url, http.clone())),
            RevisionSourceKind::Fixtures => {
                let dir = config.revisions.fixtures_dir.as_ref().expect("validated");
                Arc::new(FixtureRevisionSource::load(dir).with_context(|| format!("revision fixtures in {}", dir.display()))?)
            }
        };
        let search: Arc<dyn SearchClient> = match config.search.kind {
            SearchKind::Fixture => {
                let path = config.search.fixture.as_ref().expect("validated");
                Arc::new(FixtureSearchClient::load(path)?)
            }
            SearchKind::Google => {
                let env = |name: &str| -> Result<String> {
                    match std::env::var(name) {
                        Ok(v) => Ok(v),
                        Err(_) if config.offline => Ok(String::new()),
                        Err(_) => bail!("environment variable {name} is not set"),
                    }
                };
                let mut client = GoogleSearchClient::new(http.clone(), env(&config.search.api_key_env)?, env(&config.search.engine_id_env)?);
                if let Some(endpoint) = &config.search.endpoint {
                    client = client.with_endpoint(endpoint);
                }
                Arc::new(client)
            }
        };
        let (fetcher, dates): (Arc<dyn PageFetcher>, DateLookup) = match config.fetch.kind {
            FetchKind::Fixture => {
                let dir = config.fetch.fixtures_dir.as_ref().expect("validated");
                let pages = Arc::new(FixturePageFetcher::load(dir)?.with_max_chars(config.fetch.max_chars));
                let lookup = pages.clone();
                (pages, Arc::new(move |url: &str| lookup.html(url).and_then(|html| extract_publication_date(html, url))))
            }
            FetchKind::Http => {
                let resolver = Arc::new(DateResolver::new(http.clone()));
                (
                    Arc::new(HttpPageFetcher::new(http).with_max_chars(config.fetch.max_chars)),
                    Arc::new(move |url: &str| resolver.resolve_publication_date(url)),
                )
            }
        };
        Ok(Self { revisions, search, fetcher, dates })
    }
}
