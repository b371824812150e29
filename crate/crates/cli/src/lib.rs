//! `odqa` command line: catalog ingest, index build, HTTP service, one-shot
//! questions and benchmark runs.

pub mod service;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use odqa_core::bench::report::ReportFormat;
use odqa_core::bench::runner::now_rfc3339;
use odqa_core::bench::{
    aggregate_by_model, read_records, render, run_analysis, run_retrieval, write_records, Judge, RunManifest, Stage,
    Suite,
};
use odqa_core::catalog::Catalog;
use odqa_core::config::{Config, JudgeMode};
use odqa_core::orchestrator::{Conversation, Engine};
use odqa_core::retrieval::UserQuestion;

#[derive(Debug, Parser)]
#[command(name = "odqa", version, about = "Question answering over open-data catalogs")]
pub struct Cli {
    /// Configuration file (TOML).
    #[arg(long, short, global = true, default_value = "odqa.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a catalog manifest and store the normalized catalog under the data directory.
    Ingest {
        /// Manifest to ingest; defaults to `catalog.manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Embed every catalog document, filling the embedding cache.
    Index,
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Answer one question and print the events as JSON lines.
    Ask {
        question: String,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        pdf: Option<PathBuf>,
    },
    /// Benchmark runs and reports.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Retrieval,
    Analysis,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Md,
    Plot,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Suite manifest.
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub stage: StageArg,
    /// Model for the benchmarked stages; defaults to the configured ones.
    #[arg(long)]
    pub model: Option<String>,
    /// Output directory for records.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Use the LLM judge instead of the configured one.
    #[arg(long)]
    pub llm_judge: bool,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Run a suite and write per-question records.
    Run(RunArgs),
    /// Aggregate record directories into a report.
    Report {
        /// Record directories (one or more runs, any models).
        #[arg(long = "in", required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "md")]
        format: FormatArg,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn load_config(path: &Path) -> Result<Config> {
    Config::load(path).with_context(|| format!("loading {}", path.display()))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Ingest { manifest } => {
            let config = load_config(&cli.config)?;
            let manifest = manifest.unwrap_or(config.catalog.manifest.clone());
            let catalog = Catalog::ingest(&manifest)?;
            let dir = config.data_dir.join("catalog");
            let saved = catalog.save(&dir)?;
            writeln!(out, "ingested {} datasets into {}", catalog.len(), saved.display())?;
        }
        Command::Index => {
            let config = load_config(&cli.config)?;
            let engine = Engine::from_config(&config)?;
            writeln!(
                out,
                "indexed {} datasets with {} (dim {})",
                engine.index.len(),
                engine.embedder.id(),
                engine.index.dim()
            )?;
        }
        Command::Serve { host, port } => {
            let config = load_config(&cli.config)?;
            serve(&config, host, port)?;
        }
        Command::Ask { question, image, pdf } => {
            let config = load_config(&cli.config)?;
            ask(&config, &question, image.as_deref(), pdf.as_deref(), out)?;
        }
        Command::Bench(BenchCommand::Run(args)) => {
            let config = load_config(&cli.config)?;
            bench_run(config, &args, out)?;
        }
        Command::Bench(BenchCommand::Report { input, format, out: path }) => {
            let text = bench_report(&input, format)?;
            match path {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => out.write_all(text.as_bytes())?,
            }
        }
    }
    Ok(())
}

fn serve(config: &Config, host: Option<String>, port: Option<u16>) -> Result<()> {
    let engine = Arc::new(Engine::from_config(config)?);
    let limits = service::ServiceLimits {
        max_conversations: config.server.max_conversations,
        max_attachment_bytes: config.server.max_attachment_bytes,
    };
    let addr = format!("{}:{}", host.unwrap_or(config.server.host.clone()), port.unwrap_or(config.server.port));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let state = service::AppState::new(engine, limits);
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on http://{addr}");
        axum::serve(listener, service::router(state.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        tracing::info!("shutting down; waiting for turns in flight");
        state.drain().await;
        Ok(())
    })
}

fn media_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/png",
    }
}

fn ask(config: &Config, question: &str, image: Option<&Path>, pdf: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let engine = Engine::from_config(config)?;
    let mut q = UserQuestion::new(question);
    if let Some(p) = image {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        q = q.with_image(media_type(p), &bytes);
    }
    if let Some(p) = pdf {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("attachment.pdf");
        q = q.with_pdf(name, &bytes)?;
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let path = config.data_dir.join("conversations").join(&id).join("audit.jsonl");
    let mut conv = Conversation::persisted(&id, &path)?;
    let mut failed: Option<std::io::Error> = None;
    engine.handle_turn(&mut conv, q, &mut |ev| {
        if failed.is_none() {
            if let Err(e) = writeln!(out, "{}", ev.to_line()) {
                failed = Some(e);
            }
        }
    });
    if let Some(e) = failed {
        return Err(e.into());
    }
    Ok(())
}

pub fn bench_run(mut config: Config, args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(m) = &args.model {
        config.llm.retrieval_model = Some(m.clone());
        config.llm.analysis_model = Some(m.clone());
    }
    if args.llm_judge {
        config.bench.judge = JudgeMode::Llm;
    }
    let workers = args.workers.unwrap_or(config.bench.workers).max(1);
    let suite = Suite::load(&args.suite)?;
    let questions = suite.expand()?;
    let engine = Engine::from_config(&config)?;
    let missing = suite.missing_datasets(&engine.catalog);
    if !missing.is_empty() {
        bail!("suite references datasets missing from the catalog: {}", missing.join(", "));
    }
    let hash = config.hash();
    let stages: &[Stage] = match args.stage {
        StageArg::Retrieval => &[Stage::Retrieval],
        StageArg::Analysis => &[Stage::Analysis],
        StageArg::Both => &[Stage::Retrieval, Stage::Analysis],
    };
    for &stage in stages {
        let started_at = now_rfc3339();
        let (records, model, judge) = match stage {
            Stage::Retrieval => (
                run_retrieval(&engine, &questions, workers, &hash),
                engine.gateways.retrieval.model().to_string(),
                None,
            ),
            Stage::Analysis => {
                let judge = Judge { mode: config.bench.judge, gateway: Some(&engine.gateways.judge) };
                (
                    run_analysis(&engine, &questions, workers, &judge, &hash),
                    engine.gateways.analysis.model().to_string(),
                    Some(config.bench.judge),
                )
            }
        };
        let manifest = RunManifest {
            suite: suite.name.clone(),
            stage,
            model,
            config_hash: hash.clone(),
            questions: records.len(),
            failed: records.iter().filter(|r| r.failed.is_some()).count(),
            judge,
            started_at,
            finished_at: now_rfc3339(),
        };
        let path = write_records(&args.out, &manifest, &records)?;
        writeln!(
            out,
            "{}: {} questions, {} failed -> {}",
            stage.as_str(),
            manifest.questions,
            manifest.failed,
            path.display()
        )?;
    }
    Ok(())
}

pub fn bench_report(dirs: &[PathBuf], format: FormatArg) -> Result<String> {
    let mut records = Vec::new();
    for d in dirs {
        records.extend(read_records(d)?);
    }
    let reports = aggregate_by_model(&records)?;
    let format = match format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Md => ReportFormat::Markdown,
        FormatArg::Plot => ReportFormat::PlotSpec,
    };
    Ok(render(&reports, format))
}
