mod analysis;
mod config;
mod error;
mod io;
mod pipeline;
mod review;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::config::FileConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "logknow", version, about = "Build and evaluate interpretable log-knowledge corpora")]
struct Cli {
    /// TOML config file (lowest precedence, below env and flags).
    #[arg(long, global = true, env = "LOGKNOW_CONFIG")]
    config: Option<PathBuf>,

    /// Seed for every randomized step.
    #[arg(long, global = true, env = "LOGKNOW_SEED")]
    seed: Option<u64>,

    /// Log progress to stderr (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract templates and variable groups from raw or parsed logs.
    Mine(pipeline::MineArgs),
    /// Match logs against an existing template store.
    Match(pipeline::MatchArgs),
    /// Render log events back from a template store.
    Reconstruct(pipeline::ReconstructArgs),
    /// Ask the five knowledge questions about each event.
    Generate(pipeline::GenerateArgs),
    /// Serve the review API over a review log.
    CalibrateServe(review::ServeArgs),
    /// Emit the accepted corpus, statistics and a training config.
    BuildDataset(review::BuildArgs),
    /// Produce experiment splits.
    #[command(subcommand)]
    Split(analysis::SplitCommand),
    /// Score parsing, detection or free-text output.
    #[command(subcommand)]
    Evaluate(analysis::EvaluateCommand),
    /// Per-domain dataset statistics.
    Stats(review::StatsArgs),
}

/// Settings shared by all subcommands after layering.
pub struct Context {
    pub file: FileConfig,
    pub seed: u64,
    pub seed_given: bool,
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed);
    let ctx = Context {
        seed: seed.unwrap_or(0),
        seed_given: seed.is_some(),
        file,
    };
    match cli.command {
        Command::Mine(a) => pipeline::mine(&ctx, a),
        Command::Match(a) => pipeline::match_logs(&ctx, a),
        Command::Reconstruct(a) => pipeline::reconstruct(&ctx, a),
        Command::Generate(a) => pipeline::generate(&ctx, a).await,
        Command::CalibrateServe(a) => review::serve(&ctx, a).await,
        Command::BuildDataset(a) => review::build(&ctx, a),
        Command::Split(c) => analysis::split(&ctx, c),
        Command::Evaluate(c) => analysis::evaluate(&ctx, c),
        Command::Stats(a) => review::stats(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = if cli.verbose { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default)))
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("{}", CliError::Incomplete(format!("cannot start runtime: {e}")).line());
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
