use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use sentinel::editor::{
    build_examples, filter_training_edits, split_dataset, write_training_file, EditorBackend, EditorExample, LlmEditor,
    SplitSpec, TestSize,
};
use sentinel::eval::{evaluate_editor, render_detail};
use sentinel::revision::{decode_lines, encode_record};

use crate::config::{RunConfig, Stage};
use crate::pipeline::Pipeline;
use crate::review::ReviewService;
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "wiki-sentinel", version, about = "Find, place and review news-driven updates for Wikipedia articles")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "WIKI_SENTINEL_CONFIG", default_value = "wiki-sentinel.toml")]
    pub config: PathBuf,
    /// Page title; repeat for several. Replaces the configured page list.
    #[arg(long = "page", global = true)]
    pub pages: Vec<String>,
    /// Evaluation window: `<start>/<end>`, `<start>/<days>d` or `<start>` (14 days).
    #[arg(long, global = true)]
    pub window: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Serve model calls from cassettes and HTTP from the cache only.
    #[arg(long, global = true)]
    pub offline: bool,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_effective_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch revisions and mine human edits.
    Mine,
    /// Induce per-section content criteria for the window's base revision.
    Criteria,
    /// Run the navigator/extractor/aggregator loop.
    Aggregate {
        #[arg(long)]
        budget: Option<u32>,
    },
    /// Paragraph editing of accepted updates.
    Edit {
        #[command(subcommand)]
        action: EditCommand,
    },
    /// Evaluation reports.
    Eval {
        #[command(subcommand)]
        target: EvalCommand,
    },
    /// Editor training and test data.
    Dataset {
        #[command(subcommand)]
        action: DatasetCommand,
    },
    /// All stages for every page, then the coverage summary.
    Run,
    /// HTTP API for reviewing suggestions.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EditCommand {
    /// Turn accepted updates into paragraph edit suggestions.
    Apply,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Coverage of mined human edits by the agent's suggestions.
    Coverage,
    /// Token change and key-fact / commentary coverage of the editor.
    Editor {
        /// Examples file written by `dataset build` (e.g. test.records).
        #[arg(long)]
        dataset: PathBuf,
        /// Write per-example metrics as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Filter mined edits, synthesize sources, annotate and split.
    Build {
        #[arg(long)]
        out: PathBuf,
        /// Number of held-out entities.
        #[arg(long, conflicts_with = "test_fraction")]
        test_entities: Option<usize>,
        /// Fraction of entities held out.
        #[arg(long)]
        test_fraction: Option<f64>,
    },
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    if !cli.pages.is_empty() {
        config.pages = cli.pages.clone();
    }
    if let Some(w) = &cli.window {
        config.window = w.parse()?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.offline |= cli.offline;
    if let Some(Command::Aggregate { budget: Some(b) }) = &cli.command {
        config.budget = *b;
    }
    config.validate()?;
    Ok(config)
}

fn init_tracing() {
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub fn main() -> ExitCode {
    init_tracing();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn failed_all<T>(results: &[(String, Result<T>)]) -> ExitCode {
    for (page, r) in results {
        if let Err(e) = r {
            eprintln!("{page}: failed: {e:#}");
        }
    }
    if !results.is_empty() && results.iter().all(|(_, r)| r.is_err()) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

pub fn execute(cli: &Cli) -> Result<ExitCode> {
    let config = load_config(cli)?;
    if cli.print_effective_config {
        print!("{}", config.to_toml());
        println!("# config hash: {}", config.config_hash());
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = &cli.command else {
        bail!("no command given; see --help");
    };
    match command {
        Command::Serve { bind } => serve(&config, bind.as_deref()),
        Command::Run => {
            let pipeline = Pipeline::new(config)?;
            let summary = pipeline.run()?;
            for (page, r) in &summary.pages {
                match r {
                    Ok(run) => println!(
                        "{page}: {} factual human edits, {} candidates, {} accepted, {} suggestions (bundle {})",
                        run.mined.factual,
                        run.candidates,
                        run.accepted,
                        run.suggestions.len(),
                        run.bundle_id
                    ),
                    Err(e) => println!("{page}: failed: {e:#}"),
                }
            }
            println!("\n{}", summary.table);
            println!("backend calls: {}", summary.backend_calls);
            Ok(if summary.all_failed() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Mine => {
            let pipeline = Pipeline::new(config)?;
            let results = pipeline.for_each_page(|page| {
                let mined = pipeline.mine(page)?;
                let mut out = format!(
                    "{page}: {} revisions, {} edits, {} substantive, {} factual\n",
                    mined.summary.revision_ids.len(),
                    mined.summary.all,
                    mined.summary.substantive,
                    mined.summary.factual
                );
                for f in &mined.factual {
                    out.push_str(&format!("  {}  cites {}\n", f.id(), f.source_urls.join(", ")));
                }
                Ok(out)
            });
            print_ok(&results);
            Ok(failed_all(&results))
        }
        Command::Criteria => {
            let pipeline = Pipeline::new(config)?;
            let results = pipeline.for_each_page(|page| {
                let mined = pipeline.mine(page)?;
                let criteria = pipeline.criteria(page, &mined.base)?;
                Ok(format!("# {page} (revision {})\n{}\n", criteria.revision_id, criteria.render()))
            });
            print_ok(&results);
            Ok(failed_all(&results))
        }
        Command::Aggregate { .. } => {
            let pipeline = Pipeline::new(config)?;
            let results = pipeline.for_each_page(|page| {
                let mined = pipeline.mine(page)?;
                let criteria = pipeline.criteria(page, &mined.base)?;
                let state = pipeline.aggregate(page, &mined.base, &criteria)?;
                let mut out = format!(
                    "{page}: {} iterations, {} candidates, {} accepted\n",
                    state.iterations.len(),
                    state.candidates.len(),
                    state.accepted.len()
                );
                for c in &state.accepted {
                    out.push_str(&format!("  [{}] ({}) {}  <{}>\n", c.id, c.target_section, c.fact_text, c.source_url));
                }
                Ok(out)
            });
            print_ok(&results);
            Ok(failed_all(&results))
        }
        Command::Edit { action: EditCommand::Apply } => {
            let pipeline = Pipeline::new(config)?;
            let results = pipeline.for_each_page(|page| {
                let mined = pipeline.mine(page)?;
                let criteria = pipeline.criteria(page, &mined.base)?;
                let state = pipeline.aggregate(page, &mined.base, &criteria)?;
                let suggestions = pipeline.edit(page, &mined.base, &state)?;
                let mut out = format!("{page}: {} suggestions\n", suggestions.len());
                for s in &suggestions {
                    out.push_str(&format!(
                        "  {} [{}]\n  - {}\n  + {}\n  source: {}\n",
                        s.id, s.section_path, s.paragraph_before, s.paragraph_after, s.citation_url
                    ));
                }
                Ok(out)
            });
            print_ok(&results);
            Ok(failed_all(&results))
        }
        Command::Eval { target: EvalCommand::Coverage } => {
            let pipeline = Pipeline::new(config)?;
            let summary = pipeline.run()?;
            for (page, r) in &summary.pages {
                if let Ok(run) = r {
                    println!("# {page}\n{}", render_detail(&run.report));
                }
            }
            println!("# all pages\n{}", render_detail(&summary.combined));
            println!("{}", summary.table);
            Ok(failed_all(&summary.pages))
        }
        Command::Eval { target: EvalCommand::Editor { dataset, out } } => eval_editor(config, dataset, out.as_deref()),
        Command::Dataset { action: DatasetCommand::Build { out, test_entities, test_fraction } } => {
            let test = match (test_entities, test_fraction) {
                (Some(n), _) => TestSize::Entities(*n),
                (None, Some(f)) => TestSize::Fraction(*f),
                (None, None) => TestSize::Fraction(0.2),
            };
            build_dataset(config, out, test)
        }
    }
}

fn print_ok(results: &[(String, Result<String>)]) {
    for (_, r) in results {
        if let Ok(text) = r {
            print!("{text}");
        }
    }
}

fn build_dataset(config: RunConfig, out: &Path, test: TestSize) -> Result<ExitCode> {
    let seed = config.seed;
    let filter = config.filter.clone();
    let workers = config.workers;
    let pipeline = Pipeline::new(config)?;
    let mined = pipeline.for_each_page(|page| Ok(pipeline.mine(page)?.substantive));
    let records: Vec<_> = mined.iter().filter_map(|(_, r)| r.as_ref().ok()).flatten().cloned().collect();
    let filtered = filter_training_edits(&records, &filter);
    let backend = pipeline.models.backend(Stage::Dataset)?;
    let fetcher = pipeline.sources.fetcher.clone();
    let source_text = |r: &sentinel::mining::EditRecord| {
        r.new_citation_urls.iter().find_map(|url| fetcher.fetch(url).ok()).map(|p| p.text)
    };
    let (examples, failures) = build_examples(&filtered.kept, source_text, backend.as_ref(), workers);
    let split = split_dataset(&examples, &SplitSpec { test, seed })?;
    std::fs::create_dir_all(out)?;
    write_training_file(&out.join("train.jsonl"), &split.train)?;
    write_records(&out.join("train.records"), &split.train)?;
    write_records(&out.join("test.records"), &split.test)?;
    let stats = serde_json::json!({
        "filter": filtered.stats,
        "examples": examples.len(),
        "failures": failures.iter().map(|(id, e)| serde_json::json!({"edit": id, "error": e.to_string()})).collect::<Vec<_>>(),
        "train": split.train.len(),
        "test": split.test.len(),
        "seed": seed,
    });
    std::fs::write(out.join("stats.json"), serde_json::to_string_pretty(&stats)?)?;
    println!(
        "{} edits in, {} kept after filtering, {} examples ({} failed): {} train, {} test -> {}",
        filtered.stats.input,
        filtered.stats.kept,
        examples.len(),
        failures.len(),
        split.train.len(),
        split.test.len(),
        out.display()
    );
    Ok(failed_all(&mined))
}

fn write_records(path: &Path, examples: &[EditorExample]) -> Result<()> {
    let mut text = String::new();
    for e in examples {
        text.push_str(&encode_record(e)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn eval_editor(config: RunConfig, dataset: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let text = std::fs::read_to_string(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let examples: Vec<EditorExample> = decode_lines(&text, dataset)?;
    if examples.is_empty() {
        bail!("{} holds no examples", dataset.display());
    }
    let judge_kind = config.judge;
    let pipeline = Pipeline::new(config)?;
    let editor = LlmEditor::new(pipeline.models.backend(Stage::Editor)?);
    let judge = pipeline.models.judge(judge_kind)?;
    let mut produced = Vec::new();
    for ex in &examples {
        match editor.apply(&ex.original_paragraph, &ex.source_content, None) {
            Ok(p) => produced.push((ex, p)),
            Err(e) => eprintln!("{}: editor failed: {e}", ex.id),
        }
    }
    let pairs: Vec<(&EditorExample, &str)> = produced.iter().map(|(e, p)| (*e, p.as_str())).collect();
    let report = evaluate_editor(&pairs, judge.as_ref());
    println!(
        "{} examples: token change {:.1}, key facts coverage {:.1}%, commentary coverage {:.1}%",
        report.per_example.len(),
        report.mean_token_change,
        report.mean_key_facts_coverage * 100.0,
        report.mean_commentary_coverage * 100.0
    );
    if let Some(out) = out {
        std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(config: &RunConfig, bind: Option<&str>) -> Result<ExitCode> {
    let service = Arc::new(ReviewService::open(&config.data_dir)?);
    let token = match &config.serve.token_env {
        Some(var) => Some(std::env::var(var).with_context(|| format!("environment variable {var} is not set"))?),
        None => None,
    };
    let app = server::router(service, token, config.serve.static_dir.clone());
    let addr = bind.unwrap_or(&config.serve.bind).to_string();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!(addr = %listener.local_addr()?, "review API listening");
        server::serve(listener, app).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(ExitCode::SUCCESS)
}
