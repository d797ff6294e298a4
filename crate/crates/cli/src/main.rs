//! `rmft`: ingest, analyse, transform, simulate and evaluate an email corpus.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 invariant violation.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands::Layout;
use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, thiserror::Error)]
#[error("invariant violated: {0}")]
pub struct InvariantViolation(pub String);

#[derive(Parser, Debug)]
#[command(name = "rmft", version, about = "Email-PII memorization experiments")]
struct Cli {
    /// `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory.
    #[arg(long, global = true, env = "RMFT_OUT_DIR", default_value = "rmft-out")]
    out: PathBuf,

    /// Worker thread cap; outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Input corpus (JSONL); defaults to `<out>/corpus.jsonl`.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    /// Any config key, e.g. `--set order=6`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a directory of raw messages into a JSONL corpus.
    Ingest {
        raw_dir: PathBuf,
        /// Output file; defaults to `<out>/corpus.jsonl`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Split the corpus; write email frequencies and train/test overlap.
    Eda {
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Randomized masking of repeated emails in the train split.
    Mask,
    /// Header deduplication of the train split.
    Dedup,
    /// Train the n-gram proxy per technique and record checkpoints.
    Simulate,
    /// Per-checkpoint TER/SER/MDP and the summary table.
    Eval,
    /// MaxTER curves and AURC.
    Maxter,
    /// Bundle all tables into `<run_dir>/report` with a manifest.
    Report {
        /// Defaults to `--out`.
        run_dir: Option<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(c) = &cli.corpus {
        cfg.corpus = Some(c.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| UsageError(e.to_string()))?;
    }
    let cfg = resolve_config(&cli)?;
    let layout = Layout::new(&cli.out);
    match &cli.command {
        Command::Ingest { raw_dir, output } => {
            let out = output.clone().unwrap_or_else(|| layout.default_corpus());
            let n = commands::ingest(raw_dir, &out)?;
            println!("ingested {n} messages into {}", out.display());
        }
        Command::Eda { k } => commands::eda(&layout, &cfg, *k)?,
        Command::Mask => commands::mask(&layout, &cfg)?,
        Command::Dedup => commands::dedup(&layout, &cfg)?,
        Command::Simulate => commands::simulate_all(&layout, &cfg)?,
        Command::Eval => commands::eval(&layout, &cfg)?,
        Command::Maxter => commands::maxter(&layout, &cfg)?,
        Command::Report { run_dir } => {
            let dir = run_dir.clone().unwrap_or_else(|| cli.out.clone());
            let manifest = report::build(&dir)?;
            for s in manifest.stages.iter().filter(|s| s.status == "missing") {
                eprintln!("note: stage `{}` has no outputs", s.stage);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else if e.downcast_ref::<InvariantViolation>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
