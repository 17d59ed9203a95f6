use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ragged_core::config::{Overrides, PipelineConfig};
use ragged_core::pipeline::{self, PipelineError};
use tracing_subscriber::EnvFilter;

/// Retrieval-depth evaluation pipeline for retrieval-augmented generation.
#[derive(Parser)]
#[command(name = "ragged", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the BM25 index over the corpus.
    Index(Common),
    /// Retrieve (or import) and optionally rerank a run to max(k_grid).
    Retrieve(Common),
    /// Generate reader answers for every depth and condition.
    Sweep(Common),
    /// Compute curves.csv and the metric, verdict, behavior and slice reports.
    Evaluate(Common),
    /// Render the markdown summary and SVG plots from curves.csv.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated, strictly increasing depths.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<u32>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<u32>,
    #[arg(long)]
    behavior_threshold: Option<f64>,
    /// curves.csv to replay instead of evaluating a sweep.
    #[arg(long)]
    curves: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let mut config = PipelineConfig::load(&self.config)?;
        config.apply(&Overrides {
            output_dir: self.output_dir.clone(),
            k_grid: self.k_grid.clone(),
            epsilon: self.epsilon,
            delta: self.delta,
            behavior_threshold: self.behavior_threshold,
            curves: self.curves.clone(),
        })?;
        Ok(config)
    }
}

async fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Index(c) => {
            let out = pipeline::cmd_index(&c.load()?)?;
            let state = if out.rebuilt { "built" } else { "unchanged" };
            println!(
                "index {state}: {} ({} passages, {} documents, {:.2} passages per document)",
                out.path.display(),
                out.stats.passage_count,
                out.stats.doc_count,
                out.stats.avg_passages_per_doc
            );
        }
        Command::Retrieve(c) => {
            let out = pipeline::cmd_retrieve(&c.load()?).await?;
            println!(
                "run written: {} ({} queries, {} lines, {} skipped)",
                out.path.display(),
                out.queries,
                out.lines,
                out.skipped.len()
            );
        }
        Command::Sweep(c) => {
            let out = pipeline::cmd_sweep(&c.load()?).await?;
            println!(
                "answers written: {} ({} answers, {} generated, {} reused)",
                out.path.display(),
                out.answers,
                out.backend_calls,
                out.reused
            );
        }
        Command::Evaluate(c) => {
            let out = pipeline::cmd_evaluate(&c.load()?)?;
            let mode = if out.replay { " (replay)" } else { "" };
            println!("evaluated {} curves{mode}", out.curves);
            for file in out.files {
                println!("  {}", file.display());
            }
        }
        Command::Report(c) => {
            let out = pipeline::cmd_report(&c.load()?)?;
            for file in out.files {
                println!("{}", file.display());
            }
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
