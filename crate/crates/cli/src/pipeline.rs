//! Per-page orchestration: mine → criteria → aggregate → edit → evaluate.
//!
//! Every stage output is stored under a key made of the page, the config
//! hash, the window and the stage name. A stage whose artifact exists is
//! loaded instead of recomputed, so an interrupted run resumes where it
//! stopped and a repeated run issues no backend calls.

use std::sync::{Arc, Mutex};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use sentinel::agent::{run_aggregation, AgentRoles, AggregationState};
use sentinel::criteria::{induce_criteria, SectionCriteria};
use sentinel::editor::{apply_edit, select_paragraph, EditSuggestion, LlmEditor};
use sentinel::eval::{coverage_with_facts, decompose, summary_table, CoverageReport, EvalError, HumanEditFacts};
use sentinel::mining::{mine_history, EditRecord, FactualEdit};
use sentinel::revision::{window_snapshots, ArticleSnapshot, ArtifactKey, EvaluationWindow, Record, Store};
use sentinel::wikitext::parse_sections;

use crate::backends::{ModelFactory, Sources};
use crate::config::{RunConfig, Stage};
use crate::review::{BundleStore, SuggestionBundle};

/// Which revisions were mined for a page and window, and how many edits
/// each filter kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineSummary {
    pub page_title: String,
    pub revision_ids: Vec<u64>,
    pub base_revision: u64,
    pub all: usize,
    pub substantive: usize,
    pub factual: usize,
}

impl Record for MineSummary {
    const KIND: &'static str = "mine_summary";
}

pub struct Mined {
    pub summary: MineSummary,
    pub base: ArticleSnapshot,
    pub all: Vec<EditRecord>,
    pub substantive: Vec<EditRecord>,
    pub factual: Vec<FactualEdit>,
}

#[derive(Debug, Clone)]
pub struct PageRun {
    pub page_title: String,
    pub mined: MineSummary,
    pub candidates: usize,
    pub accepted: usize,
    pub suggestions: Vec<EditSuggestion>,
    pub report: CoverageReport,
    pub bundle_id: String,
}

pub struct RunSummary {
    pub pages: Vec<(String, Result<PageRun>)>,
    pub combined: CoverageReport,
    pub table: String,
    pub backend_calls: usize,
}

impl RunSummary {
    pub fn all_failed(&self) -> bool {
        !self.pages.is_empty() && self.pages.iter().all(|(_, r)| r.is_err())
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    pub store: Arc<Store>,
    pub sources: Sources,
    pub models: ModelFactory,
    hash: String,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        let sources = Sources::new(&config)?;
        let models = ModelFactory::new(&config)?;
        let hash = config.config_hash();
        Ok(Self { config, store, sources, models, hash })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn window(&self) -> &EvaluationWindow {
        &self.config.window
    }

    fn run_key(&self, page: &str, stage: &str) -> ArtifactKey {
        ArtifactKey::new(page, &format!("runs/{}", self.hash), format!("{}.{stage}", self.config.window.id()))
    }

    fn cached<T: Record>(&self, key: &ArtifactKey, compute: impl FnOnce() -> Result<T>) -> Result<T> {
        if self.store.single_path(key).exists() {
            return Ok(self.store.get(key)?);
        }
        let value = compute()?;
        self.store.put(key, &value)?;
        Ok(value)
    }

    fn cached_all<T: Record>(&self, key: &ArtifactKey, compute: impl FnOnce() -> Result<Vec<T>>) -> Result<Vec<T>> {
        if self.store.multi_path(key).exists() {
            return Ok(self.store.get_all(key)?);
        }
        let values = compute()?;
        self.store.put_all(key, &values)?;
        Ok(values)
    }

    /// Revisions of the window and the edits mined from them. Mining does
    /// not depend on models, so its artifacts are shared across configs.
    pub fn mine(&self, page: &str) -> Result<Mined> {
        let window = &self.config.window;
        let summary_key = ArtifactKey::windowed(page, "mined", window);
        let all_key = ArtifactKey::edits(page, window);
        let substantive_key = ArtifactKey::windowed(page, "substantive", window);
        let factual_key = ArtifactKey::windowed(page, "factual", window);
        if self.store.single_path(&summary_key).exists() {
            let summary: MineSummary = self.store.get(&summary_key)?;
            let base = self.store.get(&ArtifactKey::revision(page, summary.base_revision))?;
            return Ok(Mined {
                base,
                all: self.store.get_all(&all_key)?,
                substantive: self.store.get_all(&substantive_key)?,
                factual: self.store.get_all(&factual_key)?,
                summary,
            });
        }
        let snapshots = window_snapshots(self.sources.revisions.as_ref(), page, window)?;
        let Some(base) = snapshots.first().cloned() else {
            bail!("page {page:?} has no revisions at or before the end of window {window}");
        };
        for s in &snapshots {
            self.store.put(&ArtifactKey::revision(page, s.revision.revision_id), s)?;
        }
        let dates = self.sources.dates.clone();
        let mined = mine_history(&snapshots, |url| dates(url));
        let summary = MineSummary {
            page_title: page.to_string(),
            revision_ids: snapshots.iter().map(|s| s.revision.revision_id).collect(),
            base_revision: base.revision.revision_id,
            all: mined.all.len(),
            substantive: mined.substantive.len(),
            factual: mined.factual.len(),
        };
        self.store.put_all(&all_key, &mined.all)?;
        self.store.put_all(&substantive_key, &mined.substantive)?;
        self.store.put_all(&factual_key, &mined.factual)?;
        self.store.put(&summary_key, &summary)?;
        info!(page, all = summary.all, substantive = summary.substantive, factual = summary.factual, "mined edits");
        Ok(Mined { summary, base, all: mined.all, substantive: mined.substantive, factual: mined.factual })
    }

    pub fn criteria(&self, page: &str, base: &ArticleSnapshot) -> Result<SectionCriteria> {
        let key = self.run_key(page, &format!("criteria.{}", base.revision.revision_id));
        self.cached(&key, || {
            let backend = self.models.backend(Stage::Criteria)?;
            Ok(induce_criteria(base, backend.as_ref())?)
        })
    }

    pub fn aggregate(&self, page: &str, base: &ArticleSnapshot, criteria: &SectionCriteria) -> Result<AggregationState> {
        let key = self.run_key(page, "aggregation");
        self.cached(&key, || {
            let roles = AgentRoles {
                navigator: self.models.backend(Stage::Navigator)?,
                extractor: self.models.backend(Stage::Extractor)?,
                aggregator: self.models.backend(Stage::Aggregator)?,
            };
            let state = run_aggregation(
                base,
                criteria,
                &self.config.window,
                self.config.budget,
                &roles,
                self.sources.search.as_ref(),
                self.sources.fetcher.as_ref(),
            )?;
            info!(page, candidates = state.candidates.len(), accepted = state.accepted.len(), "aggregation finished");
            Ok(state)
        })
    }

    /// One suggestion per accepted update whose target section has prose.
    /// Suggestions are timestamped with the window end so reruns agree.
    pub fn edit(&self, page: &str, base: &ArticleSnapshot, state: &AggregationState) -> Result<Vec<EditSuggestion>> {
        let key = self.run_key(page, "suggestions");
        self.cached_all(&key, || {
            let editor = LlmEditor::new(self.models.backend(Stage::Editor)?);
            let tree = parse_sections(&base.wikitext);
            let created_at = self.config.window.end();
            let mut out = Vec::new();
            for update in &state.accepted {
                if !state.criteria.is_editable(&update.target_section) {
                    warn!(page, section = %update.target_section, update = update.id, "target section is not editable; skipped");
                    continue;
                }
                let Some(paragraph) = tree.find(&update.target_section).and_then(|n| select_paragraph(n, &update.fact_text)) else {
                    warn!(page, section = %update.target_section, "no prose paragraph in target section; skipped");
                    continue;
                };
                match apply_edit(page, base.revision.revision_id, paragraph, update, &editor, created_at) {
                    Ok(s) => out.push(s),
                    Err(e) => warn!(page, update = update.id, error = %e, "edit failed"),
                }
            }
            Ok(out)
        })
    }

    pub fn human_facts(&self, page: &str, factual: &[FactualEdit]) -> Result<Vec<HumanEditFacts>> {
        let key = self.run_key(page, "human_facts");
        self.cached_all(&key, || {
            let backend = self.models.backend(Stage::Decompose)?;
            Ok(factual
                .iter()
                .map(|e| {
                    let facts = decompose(e, backend.as_ref()).unwrap_or_else(|err: EvalError| {
                        warn!(edit = e.id(), error = %err, "decomposition failed");
                        Vec::new()
                    });
                    HumanEditFacts { edit_id: e.id(), section: e.section().clone(), facts }
                })
                .collect())
        })
    }

    pub fn evaluate(&self, page: &str, facts: &[HumanEditFacts], suggestions: &[EditSuggestion]) -> Result<CoverageReport> {
        let key = self.run_key(page, "coverage");
        self.cached(&key, || {
            let judge = self.models.judge(self.config.judge)?;
            Ok(coverage_with_facts(facts, suggestions, judge.as_ref()))
        })
    }

    pub fn run_page(&self, page: &str) -> Result<PageRun> {
        let mined = self.mine(page).context("mining")?;
        let criteria = self.criteria(page, &mined.base).context("criteria induction")?;
        let state = self.aggregate(page, &mined.base, &criteria).context("aggregation")?;
        let suggestions = self.edit(page, &mined.base, &state).context("editing")?;
        let facts = self.human_facts(page, &mined.factual).context("fact decomposition")?;
        let report = self.evaluate(page, &facts, &suggestions).context("coverage")?;
        let bundle = SuggestionBundle::new(page, self.config.window, &self.hash, suggestions.clone());
        BundleStore::new(&self.config.data_dir).save_if_absent(&bundle)?;
        Ok(PageRun {
            page_title: page.to_string(),
            mined: mined.summary,
            candidates: state.candidates.len(),
            accepted: state.accepted.len(),
            suggestions,
            report,
            bundle_id: bundle.id,
        })
    }

    /// Applies `f` to every configured page on a worker pool; results keep
    /// the page order.
    pub fn for_each_page<T: Send>(&self, f: impl Fn(&str) -> Result<T> + Sync) -> Vec<(String, Result<T>)> {
        let pages = &self.config.pages;
        let next = Mutex::new(0usize);
        let results: Mutex<Vec<(usize, Result<T>)>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..self.config.workers.min(pages.len()).max(1) {
                scope.spawn(|| loop {
                    let i = {
                        let mut n = next.lock().expect("page counter poisoned");
                        let i = *n;
                        *n += 1;
                        i
                    };
                    let Some(page) = pages.get(i) else { break };
                    let r = f(page);
                    if let Err(e) = &r {
                        warn!(page, error = format!("{e:#}"), "page failed");
                    }
                    results.lock().expect("results poisoned").push((i, r));
                });
            }
        });
        let mut results = results.into_inner().expect("results poisoned");
        results.sort_by_key(|(i, _)| *i);
        results.into_iter().map(|(i, r)| (pages[i].clone(), r)).collect()
    }

    pub fn method_name(&self) -> String {
        format!("agent ({})", self.config.llm.for_stage(Stage::Editor).model)
    }

    /// Runs every page, then writes the combined report and summary table
    /// under `<data_dir>/reports/<config hash>/<window>/`.
    pub fn run(&self) -> Result<RunSummary> {
        if self.config.pages.is_empty() {
            return Err(anyhow!("no pages configured"));
        }
        let pages = self.for_each_page(|p| self.run_page(p));
        let reports: Vec<CoverageReport> = pages.iter().filter_map(|(_, r)| r.as_ref().ok()).map(|r| r.report.clone()).collect();
        let combined = CoverageReport::merge(&reports);
        let table = summary_table(&[(&self.method_name(), &combined)]);
        let dir = self.config.data_dir.join("reports").join(&self.hash).join(self.config.window.id());
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("summary.md"), &table)?;
        std::fs::write(dir.join("coverage.record"), format!("{}\n", sentinel::revision::encode_record(&combined)?))?;
        Ok(RunSummary { pages, combined, table, backend_calls: self.models.calls() })
    }
}
