//! Acceptance suite. Each criterion runs under its own time budget and
//! prints one PASS/FAIL line; the target exits non-zero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sentinel::agent::{
    replay_decisions, roles, run_aggregation, Action, AgentRoles, AggregationDecision, AggregationState, FetchError,
    FetchedPage, FixturePageFetcher, FixtureSearchClient, PageFetcher, SearchResult,
};
use sentinel::criteria::{CriteriaEntry, SectionCriteria};
use sentinel::editor::{build_examples, filter_training_edits, split_dataset, FilterConfig, SplitSpec, TestSize};
use sentinel::eval::{commentary_coverage, coverage_with_facts, key_facts_coverage, score_edit, HumanEditFacts, NormalizedMatchJudge};
use sentinel::llm::{LlmRequest, ScriptedBackend};
use sentinel::mining::{diff_revisions, identify_factual, is_superficial, EditRecord};
use sentinel::revision::EvaluationWindow;
use sentinel::text::token_change;
use sentinel::wikitext::{extract_citations, parse_sections};
use sentinel::SectionPath;

use sentinel_cli::config::RunConfig;
use sentinel_cli::mock::MockBackend;
use sentinel_cli::pipeline::Pipeline;

const TABLE_HEADER: &str = "| Method | C_hard (%) | C_soft (%) | S_Acc (%) |";

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn offline_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/offline/offline.toml")
}

fn three_of_four_same_section() {
    let section = SectionPath::new(["Career", "Ferrari"]);
    let human = HumanEditFacts {
        edit_id: "h".into(),
        section: section.clone(),
        facts: support::facts(
            "h",
            &[
                "Hamilton will join Ferrari in 2025",
                "Hamilton signed a multi-year contract",
                "The announcement was made on 1 February 2024",
                "Hamilton will be paid a record salary",
            ],
        ),
    };
    let agent = support::suggestion(
        "a",
        section,
        "Hamilton will join Ferrari in 2025. Hamilton signed a multi-year contract; \
         the announcement was made on 1 February 2024.",
    );
    let judge = NormalizedMatchJudge;
    assert_eq!(score_edit(&human.facts, std::slice::from_ref(&agent), &judge), 0.75);
    let report = coverage_with_facts(&[human], &[agent], &judge);
    assert_eq!(report.per_edit[0].score_hard, 0.75);
    assert!(report.per_edit[0].section_accurate);
    assert_eq!((report.c_hard, report.s_acc), (0.75, 1.0));
}

fn metric_oracle() {
    for seed in 0..200 {
        let inst = support::CoverageInstance::random(seed, 10);
        let r = coverage_with_facts(&inst.human, &inst.agent, &inst.judge());
        let o = support::oracle(&inst);
        assert!(close(r.c_hard, o.c_hard) && close(r.c_soft, o.c_soft), "seed {seed}: micro");
        assert!(close(r.c_hard_macro, o.c_hard_macro) && close(r.c_soft_macro, o.c_soft_macro), "seed {seed}: macro");
        assert!(close(r.s_acc, o.s_acc), "seed {seed}: s_acc");
        assert_eq!(r.per_edit.len(), o.per_edit.len());
        for (e, (h, s)) in r.per_edit.iter().zip(&o.per_edit) {
            assert!(close(e.score_hard, *h) && close(e.score_soft, *s), "seed {seed}: per edit");
        }
    }
}

fn locality_laws() {
    for seed in 0..1000u64 {
        let inst = support::CoverageInstance::random(seed.wrapping_mul(0x9E37_79B9), 10);
        let r = coverage_with_facts(&inst.human, &inst.agent, &inst.judge());
        assert!(r.c_hard <= r.c_soft && r.c_hard_macro <= r.c_soft_macro, "seed {seed}");
        assert!(r.per_edit.iter().all(|e| e.score_hard <= e.score_soft), "seed {seed}");
        let more = inst.with_extra_agent(seed);
        let after = coverage_with_facts(&more.human, &more.agent, &more.judge());
        assert!(after.c_soft >= r.c_soft, "seed {seed}: soft decreased");
    }
}

fn diff_filter_labels() {
    let pairs = support::revision_pairs();
    assert_eq!(pairs.len(), 25);
    let mut agree = 0;
    for p in &pairs {
        let old = support::snapshot("Nadia Okafor", 10, support::ts(2, 9), &p.old);
        let new = support::snapshot("Nadia Okafor", 11, support::ts(3, 9), &p.new);
        let records = diff_revisions(&old, &new);
        let superficial = records.iter().all(is_superficial);
        let substantive: Vec<EditRecord> = records.iter().filter(|r| !is_superficial(r)).cloned().collect();
        let factual = !identify_factual(&substantive, |_| None).is_empty();
        if records.len() == 1 && superficial == p.superficial && factual == p.factual {
            agree += 1;
        } else {
            eprintln!("  disagreement on {}", p.name);
        }
        assert!(diff_revisions(&old, &old).is_empty() && diff_revisions(&new, &new).is_empty(), "{}", p.name);
    }
    assert_eq!(agree, 25);
    for (name, text) in support::articles() {
        let s = support::snapshot(&name, 1, support::ts(1, 0), &text);
        assert!(diff_revisions(&s, &s).is_empty(), "{name}");
    }
}

const WIKI_PIECES: &[&str] = &[
    "== A ==\n", "=== B ===\n", "= top =\n", "====== deep ======\n", "{{Infobox|a=b\n== t ==\n}}", "{{", "}}",
    "<!-- == c == -->", "<!--", "<nowiki>== n ==</nowiki>", "<pre>\n== p ==\n</pre>", "<ref>https://x.example/a</ref>",
    "<ref name=r/>", "{{cite web|url=https://y.example}}", "[[Link|text]]", "\r\n", "\n\n", "{|\n|a\n|}\n", "'''b'''",
];

fn fuzz_input(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(0..40) {
        match rng.gen_range(0..4) {
            0 => s.push_str(WIKI_PIECES[rng.gen_range(0..WIKI_PIECES.len())]),
            1 => s.push(rng.gen::<char>()),
            _ => {
                const BYTES: &[u8] = b"ab =\n{}<>|[]!-.,";
                for _ in 0..rng.gen_range(1..12) {
                    s.push(BYTES[rng.gen_range(0..BYTES.len())] as char);
                }
            }
        }
    }
    s
}

fn parser_totality() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10_000 {
        let input = fuzz_input(&mut rng);
        let tree = parse_sections(&input);
        assert_eq!(tree.reconstruct(), input, "fuzz case {i}");
        assert_eq!(tree.section_count(), support::count_headings(&input), "fuzz case {i}: {input:?}");
    }
    let articles = support::articles();
    assert_eq!(articles.len(), 20);
    for (name, text) in &articles {
        let tree = parse_sections(text);
        assert_eq!(&tree.reconstruct(), text, "{name}");
        assert_eq!(tree.section_count(), support::count_headings(text), "{name}");
    }
    let (refs, labels) = support::citation_fixture();
    let lower = refs.to_ascii_lowercase();
    assert_eq!(lower.matches("<ref").count() - lower.matches("<references").count(), 50);
    assert_eq!(extract_citations(&refs), labels);
}

fn token_change_laws() {
    let vocab = ["the", "a", "cat", "sat", "on", "mat", "2024", "Ferrari", ".", "won", "races"];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let phrase = |rng: &mut ChaCha8Rng| {
        (0..rng.gen_range(0..30)).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
    };
    for _ in 0..1000 {
        let a = phrase(&mut rng);
        let b = phrase(&mut rng);
        let d = token_change(&a, &b);
        assert_eq!(d, token_change(&b, &a), "{a:?} / {b:?}");
        assert_eq!(token_change(&a, &a), 0);
        assert_eq!(d, support::token_change_dp(&a, &b), "{a:?} / {b:?}");
    }
}

const TESTVILLE: &str = "'''Testville''' is a town.\n\n== Economy ==\nTestville has a market.\n";

fn testville_criteria() -> SectionCriteria {
    SectionCriteria {
        page_title: "Testville".into(),
        revision_id: 1,
        entries: vec![
            CriteriaEntry { section: SectionPath::lead(), criteria: vec!["overview".into()], editable: true },
            CriteriaEntry { section: SectionPath::new(["Economy"]), criteria: vec!["businesses".into()], editable: true },
        ],
    }
}

fn testville_window() -> EvaluationWindow {
    EvaluationWindow::new(support::ts(1, 0), chrono::Duration::days(14)).unwrap()
}

fn testville_sources(n: usize) -> (FixtureSearchClient, FixturePageFetcher) {
    let url = |i| format!("https://news.example/testville-{i}");
    let results = (0..n)
        .map(|i| SearchResult { url: url(i), title: format!("Testville story {i}"), snippet: "Testville news".into(), published: None })
        .collect();
    let pages: HashMap<String, String> = (0..n)
        .map(|i| (url(i), format!("<html><body><article><p>Testville opened factory number {i} this week.</p></article></body></html>")))
        .collect();
    (FixtureSearchClient::new(results), FixturePageFetcher::new(pages))
}

fn scripted(script: Vec<&'static str>) -> Arc<ScriptedBackend> {
    let script = Mutex::new(script.into_iter());
    let first = Mutex::new(None::<u64>);
    Arc::new(ScriptedBackend::new("scripted", move |req: &LlmRequest| {
        Ok(if req.system == roles::NAVIGATOR_SYSTEM {
            "Query: Testville news".to_string()
        } else if req.system == roles::EXTRACTOR_SYSTEM {
            let fact = req.prompt.lines().find(|l| l.contains("factory number")).unwrap_or("").trim().to_string();
            format!("Fact: {fact}\nSection: Economy\nRationale: business news")
        } else {
            let id: u64 = req.prompt.split("Proposed update [").nth(1).unwrap().split(']').next().unwrap().parse().unwrap();
            let first = *first.lock().unwrap().get_or_insert(id);
            match script.lock().unwrap().next().unwrap_or("IGNORE") {
                "R" => format!("Decision: REPLACE\nReplaces: {first}\nReason: newer"),
                other => format!("Decision: {other}\nReason: scripted"),
            }
        })
    }))
}

struct Counting {
    inner: FixturePageFetcher,
    seen: Mutex<Vec<String>>,
}

impl PageFetcher for Counting {
    fn fetch(&self, url: &str) -> Result<FetchedPage, FetchError> {
        self.seen.lock().unwrap().push(url.to_string());
        self.inner.fetch(url)
    }
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn aggregation_state_machine() {
    let snap = support::snapshot("Testville", 1, support::ts(1, 0), TESTVILLE);
    let (search, pages) = testville_sources(4);
    let b = scripted(vec!["ADD", "ADD", "R", "IGNORE"]);
    let state = run_aggregation(&snap, &testville_criteria(), &testville_window(), 4, &AgentRoles::shared(b), &search, &pages).unwrap();
    let actions: Vec<Action> = state.decisions.iter().map(|d| d.action).collect();
    assert_eq!(actions, [Action::Add, Action::Add, Action::Replace, Action::Ignore]);
    assert_eq!(replay_decisions(&state.candidates, &state.decisions).unwrap(), state.accepted);
    assert_eq!(state.accepted.len(), 2);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.gen_range(1..25u64);
        let mut s = AggregationState::new("Testville", 1, testville_window(), testville_criteria(), n as u32);
        s.candidates = (1..=n).map(|i| support::candidate(i, &format!("fact {i}"), SectionPath::lead())).collect();
        for id in 1..=n {
            let (action, replaced_id) = match rng.gen_range(0..3) {
                0 => (Action::Ignore, None),
                2 if !s.accepted.is_empty() => (Action::Replace, Some(s.accepted[rng.gen_range(0..s.accepted.len())].id)),
                _ => (Action::Add, None),
            };
            s.apply(AggregationDecision { candidate_id: id, action, replaced_id, reason: String::new() }).unwrap();
            assert_eq!(replay_decisions(&s.candidates, &s.decisions).unwrap(), s.accepted);
        }
    }

    let (search, pages) = testville_sources(3);
    let fetcher = Counting { inner: pages, seen: Mutex::new(Vec::new()) };
    let state = run_aggregation(&snap, &testville_criteria(), &testville_window(), 10, &AgentRoles::shared(scripted(vec![])), &search, &fetcher).unwrap();
    let seen = fetcher.seen.into_inner().unwrap();
    assert_eq!(seen.len(), seen.iter().collect::<HashSet<_>>().len());
    assert_eq!(state.visited_urls, seen);
    assert!(state.exhausted);

    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut config = RunConfig::load(&offline_config()).unwrap();
        config.data_dir = dir.path().to_path_buf();
        config.offline = true;
        let summary = Pipeline::new(config).unwrap().run().unwrap();
        assert!(summary.pages.iter().all(|(_, r)| r.is_ok()));
        (summary.table, tree_bytes(dir.path()))
    };
    let (table_a, files_a) = run();
    let (table_b, files_b) = run();
    assert_eq!(table_a, table_b);
    assert!(!files_a.is_empty());
    assert_eq!(files_a.keys().collect::<Vec<_>>(), files_b.keys().collect::<Vec<_>>());
    for (path, bytes) in &files_a {
        assert!(files_b[path] == *bytes, "{} differs between runs", path.display());
    }
}

fn clean_record(rev: u64, section: &str) -> EditRecord {
    let inserted = format!("Revision {rev} adds a new sentence here.");
    support::record("Town", rev, SectionPath::new([section]), &[], &[inserted.as_str()], "The town has a market.", &format!("The town has a market. {inserted}"))
}

fn dataset_construction() {
    let examples = support::synthetic_examples(50, 3);
    let spec = SplitSpec { test: TestSize::Fraction(0.2), seed: 11 };
    let split = split_dataset(&examples, &spec).unwrap();
    let train: HashSet<&str> = split.train.iter().map(|e| e.entity.as_str()).collect();
    let test: Vec<&str> = split.test.iter().map(|e| e.entity.as_str()).collect();
    let test_set: HashSet<&str> = test.iter().copied().collect();
    assert_eq!(test_set.len(), test.len());
    assert!(train.is_disjoint(&test_set));
    assert_eq!(train.len() + test_set.len(), 50);
    assert_eq!(split, split_dataset(&examples, &spec).unwrap());

    let h = SectionPath::new(["History"]);
    let long = (0..200).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let fixture = vec![
        clean_record(10, "History"),
        support::record("Town", 20, h.clone(), &[], &["CafÃ© opened in 2024 here."], "x", "x CafÃ© opened in 2024 here."),
        support::record("Town", 21, h.clone(), &["It has 5 shops."], &["It has 6 shops."], "It has 5 shops.", "It has 6 shops."),
        support::record("Town", 22, h.clone(), &[], &[long.as_str()], "", &long),
        support::record("Town", 23, h.clone(), &[], &["The mayor is a total fraud and liar."], "A.", "A. The mayor is a total fraud and liar."),
        clean_record(11, "Economy"),
        support::record("Town", 24, h, &["The mayor is a total fraud and liar."], &[], "A. The mayor is a total fraud and liar.", "A."),
        clean_record(25, "References"),
        clean_record(26, "External links"),
    ];
    let config = FilterConfig::default();
    let out = filter_training_edits(&fixture, &config);
    let s = out.stats;
    assert_eq!((s.noise, s.size, s.revert, s.pruned_section), (1, 2, 2, 2));
    let kept: Vec<u64> = out.kept.iter().map(|r| r.to_revision.revision_id).collect();
    assert_eq!(kept, [10, 11]);
    assert_eq!(filter_training_edits(&out.kept, &config).kept, out.kept);
}

fn editor_metric_sanity() {
    let judge = NormalizedMatchJudge;
    let gold = support::editor_examples();
    assert!(gold.len() >= 8);
    for e in &gold {
        assert_eq!(key_facts_coverage(e, &e.edited_paragraph, &judge), 1.0, "{}", e.id);
        assert_eq!(commentary_coverage(e, &e.edited_paragraph, &judge), 0.0, "{}", e.id);
    }
    let records: Vec<EditRecord> = (0..6)
        .map(|i| EditRecord { new_citation_urls: vec![format!("https://news.example/{i}")], ..clean_record(40 + i, "History") })
        .collect();
    let source = |r: &EditRecord| {
        Some(format!("The town has a market. Revision {} adds a new sentence here.", r.to_revision.revision_id))
    };
    let (built, failures) = build_examples(&records, source, &MockBackend::new("heuristic-mock"), 2);
    assert!(failures.is_empty(), "{failures:?}");
    assert_eq!(built.len(), records.len());
    for e in &built {
        assert_eq!(key_facts_coverage(e, &e.edited_paragraph, &judge), 1.0, "{}", e.id);
        assert_eq!(commentary_coverage(e, &e.edited_paragraph, &judge), 0.0, "{}", e.id);
    }
}

fn offline_pipeline_run() {
    let dir = tempfile::tempdir().unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_wiki-sentinel"))
        .arg("--config")
        .arg(offline_config())
        .args(["--offline", "run"])
        .env("WIKI_SENTINEL_DATA", dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "exit {:?}\n{stdout}\n{}", output.status, String::from_utf8_lossy(&output.stderr));
    assert!(!stdout.contains("failed:"), "{stdout}");
    assert!(stdout.lines().any(|l| l.trim() == TABLE_HEADER), "{stdout}");
    let pages = ["Lewis Hamilton", "Mount Etna"];
    assert!(pages.iter().all(|p| stdout.contains(&format!("{p}: "))), "{stdout}");

    let bundles = sentinel_cli::review::BundleStore::new(dir.path()).load_all().unwrap();
    assert_eq!(bundles.len(), 2);
    let cited = bundles.iter().flat_map(|b| &b.suggestions).filter(|s| s.citation_url.starts_with("http")).count();
    assert!(cited >= 1, "no suggestion with a citation");
}

struct Criterion {
    number: u32,
    name: &'static str,
    budget: Duration,
    check: fn(),
}

fn main() {
    let criteria = [
        Criterion { number: 1, name: "three of four facts scores 0.75, section-accurate", budget: Duration::from_secs(1), check: three_of_four_same_section },
        Criterion { number: 2, name: "coverage equals brute-force oracle on 200 instances", budget: Duration::from_secs(10), check: metric_oracle },
        Criterion { number: 3, name: "locality laws on 1,000 instances", budget: Duration::from_secs(30), check: locality_laws },
        Criterion { number: 4, name: "25 labeled revision pairs and identity diffs", budget: Duration::from_secs(5), check: diff_filter_labels },
        Criterion { number: 5, name: "parser totality, 20 articles, 50 refs", budget: Duration::from_secs(60), check: parser_totality },
        Criterion { number: 6, name: "token_change symmetry, identity and DP oracle", budget: Duration::from_secs(10), check: token_change_laws },
        Criterion { number: 7, name: "aggregation fold, URL dedup, deterministic mock run", budget: Duration::from_secs(30), check: aggregation_state_machine },
        Criterion { number: 8, name: "entity-disjoint split and training filter", budget: Duration::from_secs(5), check: dataset_construction },
        Criterion { number: 9, name: "editor metrics on gold examples", budget: Duration::from_secs(5), check: editor_metric_sanity },
        Criterion { number: 10, name: "offline run over two fixture pages", budget: Duration::from_secs(60), check: offline_pipeline_run },
    ];
    let mut failed = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.check));
        let elapsed = start.elapsed();
        let verdict = match outcome {
            Ok(()) if elapsed <= c.budget => "PASS",
            Ok(()) => "FAIL (over time budget)",
            Err(_) => "FAIL",
        };
        println!("criterion {:>2}: {verdict} {} ({:.2}s, budget {}s)", c.number, c.name, elapsed.as_secs_f64(), c.budget.as_secs());
        if verdict != "PASS" {
            failed.push(c.number);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
