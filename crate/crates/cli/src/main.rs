//! `qws`: batch front-end for Wishart proposals and rejection sampling.
//!
//! Exit status 0 on success, 2 for an invalid configuration, 1 when the
//! computation fails and 3 for file errors. Failures print one JSON line on
//! stderr.

// Range checks must reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use config::{Overrides, RunConfig, Task};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qws", version, about = "Samples quantum states from Wishart proposals by rejection")]
struct Cli {
    /// Task to run; may instead be set by `task` in the config file.
    task: Option<Task>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every random stream is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Hilbert-space dimension.
    #[arg(long)]
    m: Option<usize>,
    /// Wishart degrees of freedom.
    #[arg(long)]
    n: Option<usize>,
    /// Weight of the uniform component.
    #[arg(long)]
    kappa: Option<f64>,
    /// Measurement counts, comma or space separated.
    #[arg(long)]
    counts: Option<String>,
    /// POM name, `tetra` or `tetra^k`.
    #[arg(long)]
    pom: Option<String>,
    /// Peak mixing toward the ML estimate.
    #[arg(long)]
    x1: Option<f64>,
    /// Shift toward the ML estimate.
    #[arg(long)]
    x2: Option<f64>,
    /// Proposal sample size.
    #[arg(long = "N")]
    total: Option<u64>,
    /// States held in memory at once.
    #[arg(long)]
    chunk_size: Option<u64>,
    /// λ values for the credibility curves, `start:stop:step` or a list.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Sample file or directory of `.qws` files to read instead of sampling.
    #[arg(long)]
    input: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return fail(&CliError::config("arguments", e.to_string().trim().to_string())),
    };
    let config_file = cli.config.clone();
    let ov = Overrides {
        task: cli.task,
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        threads: cli.threads,
        m: cli.m,
        n: cli.n,
        kappa: cli.kappa,
        counts: cli.counts,
        pom: cli.pom,
        x1: cli.x1,
        x2: cli.x2,
        total: cli.total,
        chunk_size: cli.chunk_size,
        lambda_grid: cli.lambda_grid,
        input: cli.input,
    };
    let cfg = match RunConfig::load(ov) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(t) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(&CliError::config("threads", e.to_string()));
        }
    }
    match tasks::run(&cfg, config_file.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}
