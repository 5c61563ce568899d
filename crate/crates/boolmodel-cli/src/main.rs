//! `boolmodel`: config-driven experiments on the Poisson Boolean model,
//! plus the built-in differential oracle suites.

mod config;
mod runner;

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Default seed for the oracle suites, so a bare `boolmodel oracle`
/// reproduces the same checks on every checkout.
const ORACLE_SEED: u64 = 0xB001;

#[derive(Parser)]
#[command(name = "boolmodel", version, about = "Poisson Boolean model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments in a TOML config and write CSVs plus a manifest.
    Run {
        /// Path to the run configuration.
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: BOOLMODEL_THREADS, then all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the built-in differential oracle suites and report each check.
    Oracle {
        /// Run a single suite by name instead of all of them.
        #[arg(long)]
        suite: Option<String>,
        /// Seed for the oracle's own sampling.
        #[arg(long, default_value_t = ORACLE_SEED)]
        seed: u64,
        /// Worker threads (default: BOOLMODEL_THREADS, then all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let count = match threads {
        Some(n) => Some(n),
        None => match std::env::var("BOOLMODEL_THREADS") {
            Ok(value) => {
                Some(value.parse().context("BOOLMODEL_THREADS must be a thread count")?)
            }
            Err(_) => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = count {
        if n == 0 {
            bail!("thread count must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn cmd_run(
    config_path: &PathBuf,
    out: &PathBuf,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<ExitCode> {
    let run_config = config::RunConfig::load(config_path)?;
    let master_seed = seed.unwrap_or(run_config.master_seed);
    let pool = thread_pool(threads)?;
    let started = Utc::now();
    let clock = Instant::now();
    let outcome = pool.install(|| runner::execute(&run_config, master_seed, out))?;
    let finished = Utc::now();
    runner::write_manifest(
        out,
        &run_config,
        master_seed,
        &started.to_rfc3339_opts(SecondsFormat::Millis, true),
        &finished.to_rfc3339_opts(SecondsFormat::Millis, true),
        clock.elapsed().as_secs_f64(),
        &outcome,
    )?;
    for name in &outcome.outputs {
        println!("wrote {}", out.join(name).display());
    }
    println!("wrote {}", out.join("manifest.json").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(suite: Option<&str>, seed: u64, threads: Option<usize>) -> Result<ExitCode> {
    if let Some(name) = suite {
        if !boolmodel::oracle::SUITES.contains(&name) {
            bail!(
                "unknown suite {name:?}; available: {}",
                boolmodel::oracle::SUITES.join(", ")
            );
        }
    }
    let pool = thread_pool(threads)?;
    let outcomes = pool.install(|| boolmodel::oracle::run_suites(suite, seed));
    let mut failures = 0;
    for check in &outcomes {
        let tag = if check.passed { "pass" } else { "FAIL" };
        println!("[{tag}] {} / {}: {}", check.suite, check.name, check.detail);
        if !check.passed {
            failures += 1;
        }
    }
    println!("{} checks, {} failed", outcomes.len(), failures);
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, seed, threads } => cmd_run(config, out, *seed, *threads),
        Command::Oracle { suite, seed, threads } => {
            cmd_oracle(suite.as_deref(), *seed, *threads)
        }
    };
    match result {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}
