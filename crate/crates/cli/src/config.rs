//! Run configuration: one TOML document with `${VAR}` interpolation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use sentinel::agent::DEFAULT_BUDGET;
use sentinel::editor::FilterConfig;
use sentinel::revision::{EvaluationWindow, ENGLISH_WIKIPEDIA_API};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("environment variable {0} referenced in the config is not set")]
    MissingEnv(String),
    #[error("unterminated ${{...}} in config at byte {0}")]
    Unterminated(usize),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub pages: Vec<String>,
    /// `<start>/<end>` or `<start>/<days>d`; a bare start means 14 days.
    #[serde(with = "window_text")]
    pub window: EvaluationWindow,
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default)]
    pub offline: bool,
    #[serde(default)]
    pub revisions: RevisionsConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub fetch: FetchConfig,
    pub llm: LlmConfig,
    #[serde(default)]
    pub judge: JudgeKind,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub serve: ServeConfig,
}

mod window_text {
    use serde::{Deserialize, Deserializer, Serializer};
    use sentinel::revision::EvaluationWindow;

    pub fn serialize<S: Serializer>(w: &EvaluationWindow, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&w.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EvaluationWindow, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn default_budget() -> u32 {
    DEFAULT_BUDGET
}

fn default_workers() -> usize {
    4
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_rate() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RevisionSourceKind {
    #[default]
    Mediawiki,
    Fixtures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevisionsConfig {
    #[serde(default)]
    pub kind: RevisionSourceKind,
    #[serde(default = "default_api_url")]
    pub api_url: String,
    pub fixtures_dir: Option<PathBuf>,
    /// Raw HTTP responses; required for `--offline` with live sources.
    pub http_cache_dir: Option<PathBuf>,
    #[serde(default = "default_rate")]
    pub rate_limit: f64,
}

fn default_api_url() -> String {
    ENGLISH_WIKIPEDIA_API.to_string()
}

impl Default for RevisionsConfig {
    fn default() -> Self {
        Self {
            kind: RevisionSourceKind::default(),
            api_url: default_api_url(),
            fixtures_dir: None,
            http_cache_dir: None,
            rate_limit: default_rate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    #[default]
    Google,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default)]
    pub kind: SearchKind,
    #[serde(default = "default_google_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_google_cx_env")]
    pub engine_id_env: String,
    pub endpoint: Option<String>,
    /// JSON array of search results for `kind = "fixture"`.
    pub fixture: Option<PathBuf>,
}

fn default_google_key_env() -> String {
    "GOOGLE_API_KEY".into()
}

fn default_google_cx_env() -> String {
    "GOOGLE_CSE_ID".into()
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            kind: SearchKind::default(),
            api_key_env: default_google_key_env(),
            engine_id_env: default_google_cx_env(),
            endpoint: None,
            fixture: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FetchKind {
    #[default]
    Http,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchConfig {
    #[serde(default)]
    pub kind: FetchKind,
    pub fixtures_dir: Option<PathBuf>,
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
}

fn default_max_chars() -> usize {
    sentinel::agent::fetch::DEFAULT_MAX_CHARS
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self { kind: FetchKind::default(), fixtures_dir: None, max_chars: default_max_chars() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// OpenAI-compatible chat-completion endpoint.
    #[default]
    Chat,
    /// Built-in deterministic heuristic responder.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub kind: ModelKind,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_llm_key_env")]
    pub api_key_env: Option<String>,
}

fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}

fn default_llm_key_env() -> Option<String> {
    Some("OPENAI_API_KEY".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteSetting {
    #[default]
    Off,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteConfig {
    #[serde(default)]
    pub mode: CassetteSetting,
    /// Directory holding one `<model>.records` file per model.
    pub dir: Option<PathBuf>,
}

/// Pipeline stages that talk to a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Criteria,
    Navigator,
    Extractor,
    Aggregator,
    Editor,
    Decompose,
    Judge,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub default: ModelConfig,
    pub criteria: Option<ModelConfig>,
    pub navigator: Option<ModelConfig>,
    pub extractor: Option<ModelConfig>,
    pub aggregator: Option<ModelConfig>,
    pub editor: Option<ModelConfig>,
    pub decompose: Option<ModelConfig>,
    pub judge: Option<ModelConfig>,
    pub dataset: Option<ModelConfig>,
    #[serde(default = "default_rate")]
    pub rate_limit: f64,
    #[serde(default)]
    pub cassette: CassetteConfig,
}

impl LlmConfig {
    pub fn for_stage(&self, stage: Stage) -> &ModelConfig {
        let specific = match stage {
            Stage::Criteria => &self.criteria,
            Stage::Navigator => &self.navigator,
            Stage::Extractor => &self.extractor,
            Stage::Aggregator => &self.aggregator,
            Stage::Editor => &self.editor,
            Stage::Decompose => &self.decompose,
            Stage::Judge => &self.judge,
            Stage::Dataset => &self.dataset,
        };
        specific.as_ref().unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    /// Normalized token-run containment.
    #[default]
    String,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub static_dir: Option<PathBuf>,
    /// Environment variable holding a bearer token; unset means no auth.
    pub token_env: Option<String>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self { bind: default_bind(), static_dir: None, token_env: None }
    }
}

/// Replaces `${VAR}` and `${VAR:-default}` with environment values.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    let mut offset = 0;
    while let Some(i) = rest.find("${") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        let end = after.find('}').ok_or(ConfigError::Unterminated(offset + i))?;
        let expr = &after[..end];
        let (name, default) = match expr.split_once(":-") {
            Some((n, d)) => (n.trim(), Some(d)),
            None => (expr.trim(), None),
        };
        match (lookup(name), default) {
            (Some(v), _) => out.push_str(&v),
            (None, Some(d)) => out.push_str(d),
            (None, None) => return Err(ConfigError::MissingEnv(name.to_string())),
        }
        let consumed = i + 2 + end + 1;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let resolved = interpolate_env(text, |k| std::env::var(k).ok())?;
        let config: RunConfig = toml::from_str(&resolved)?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a file; relative paths inside it are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        for p in [
            &mut self.revisions.fixtures_dir,
            &mut self.revisions.http_cache_dir,
            &mut self.search.fixture,
            &mut self.fetch.fixtures_dir,
            &mut self.llm.cassette.dir,
            &mut self.serve.static_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.budget == 0 {
            return invalid("budget must be at least 1");
        }
        if self.workers == 0 {
            return invalid("workers must be at least 1");
        }
        if self.revisions.kind == RevisionSourceKind::Fixtures && self.revisions.fixtures_dir.is_none() {
            return invalid("revisions.kind = \"fixtures\" needs revisions.fixtures_dir");
        }
        if self.search.kind == SearchKind::Fixture && self.search.fixture.is_none() {
            return invalid("search.kind = \"fixture\" needs search.fixture");
        }
        if self.fetch.kind == FetchKind::Fixture && self.fetch.fixtures_dir.is_none() {
            return invalid("fetch.kind = \"fixture\" needs fetch.fixtures_dir");
        }
        if self.llm.cassette.mode != CassetteSetting::Off && self.llm.cassette.dir.is_none() {
            return invalid("llm.cassette.mode needs llm.cassette.dir");
        }
        if self.filter.min_tokens > self.filter.max_tokens {
            return invalid("filter.min_tokens exceeds filter.max_tokens");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hash over the settings that change pipeline outputs. Page list,
    /// paths, parallelism, rate limits and cassette mode are left out.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Relevant<'a> {
            budget: u32,
            seed: u64,
            revisions_kind: RevisionSourceKind,
            api_url: &'a str,
            search_kind: SearchKind,
            search_endpoint: &'a Option<String>,
            fetch_kind: FetchKind,
            max_chars: usize,
            models: Vec<(String, String, String)>,
            judge: JudgeKind,
            filter: &'a FilterConfig,
        }
        let stages = [
            Stage::Criteria,
            Stage::Navigator,
            Stage::Extractor,
            Stage::Aggregator,
            Stage::Editor,
            Stage::Decompose,
            Stage::Judge,
            Stage::Dataset,
        ];
        let models = stages
            .iter()
            .map(|s| {
                let m = self.llm.for_stage(*s);
                (format!("{s:?}"), m.model.clone(), if m.kind == ModelKind::Mock { "mock".into() } else { m.base_url.clone() })
            })
            .collect();
        let relevant = Relevant {
            budget: self.budget,
            seed: self.seed,
            revisions_kind: self.revisions.kind,
            api_url: &self.revisions.api_url,
            search_kind: self.search.kind,
            search_endpoint: &self.search.endpoint,
            fetch_kind: self.fetch.kind,
            max_chars: self.fetch.max_chars,
            models,
            judge: self.judge,
            filter: &self.filter,
        };
        let json = serde_json::to_string(&relevant).expect("hash input serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..12].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
window = "2024-02-01"
[llm.default]
model = "m"
"#;

    #[test]
    fn defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.window.duration(), chrono::Duration::days(14));
        assert_eq!(c.budget, 15);
        assert_eq!(c.fetch.max_chars, 20_000);
        assert_eq!(c.revisions.rate_limit, 10.0);
        assert_eq!(c.filter.min_tokens, 3);
        assert_eq!(c.llm.for_stage(Stage::Judge).model, "m");
    }

    #[test]
    fn env_interpolation() {
        let env = |k: &str| (k == "KEY").then(|| "secret".to_string());
        assert_eq!(interpolate_env("a=${KEY} b=${NOPE:-x}", env).unwrap(), "a=secret b=x");
        assert!(matches!(interpolate_env("${NOPE}", env), Err(ConfigError::MissingEnv(_))));
        assert!(matches!(interpolate_env("${KEY", env), Err(ConfigError::Unterminated(0))));
    }

    #[test]
    fn effective_config_round_trips() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        let again = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.config_hash(), again.config_hash());
    }

    #[test]
    fn hash_ignores_pages_but_not_budget() {
        let a = RunConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.pages.push("X".into());
        b.workers = 9;
        assert_eq!(a.config_hash(), b.config_hash());
        b.budget = 3;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn rejects_unknown_keys_and_zero_budget() {
        assert!(RunConfig::from_toml(&format!("bogus = 1\n{MINIMAL}")).is_err());
        assert!(RunConfig::from_toml(&format!("budget = 0\n{MINIMAL}")).is_err());
    }
}
