//! `gram-profile`: solve, invert, simulate and compare limiting Gram spectra
//! from a JSON configuration.

// `!(x > 0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gram_profile::capacity::LogBase;

use commands::Context;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] gram_profile::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use gram_profile::Error;
        match self {
            Failure::Config(_) | Failure::Io(_) | Failure::Core(Error::InvalidInput(_)) => 2,
            Failure::Core(Error::NoConvergence { .. }) => 3,
            Failure::Core(Error::NumericalFailure(_) | Error::DegenerateDenominator { .. }) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gram-profile", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seeds overriding the config, e.g. `1,2,5-9`.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report capacity in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Stieltjes transforms f, f~ on the configured z grid.
    Solve,
    /// Limiting density on a real grid by Stieltjes inversion.
    Density,
    /// Eigenvalues of sampled Gram matrices, one CSV per seed.
    Simulate,
    /// KS distance between each sampled spectrum and the limit CDF.
    Compare,
    /// Empirical and limiting channel capacity.
    Capacity,
}

type Action = fn(&Context) -> Result<(), Failure>;

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    let bad = |part: &str| Failure::Config(format!("--seeds: cannot parse {part:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
                let b: u64 = b.trim().parse().map_err(|_| bad(part))?;
                if a > b {
                    return Err(bad(part));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config <path> is required".into()))?;
    let loaded = config::load(path)?;
    let prepared = config::prepare(&loaded.config)?;
    let mut seeds = match &cli.seeds {
        Some(s) => parse_seeds(s)?,
        None => loaded.config.seeds.clone(),
    };
    seeds.sort_unstable();
    seeds.dedup();
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Io(format!("{}: {e}", cli.out.display())))?;

    let (name, action): (&'static str, Action) = match cli.command {
        Command::Solve => ("solve", commands::solve),
        Command::Density => ("density", commands::density),
        Command::Simulate => ("simulate", commands::simulate),
        Command::Compare => ("compare", commands::compare),
        Command::Capacity => ("capacity", commands::capacity),
    };
    let ctx = Context {
        command: name,
        out: &cli.out,
        hash: config::config_hash(&loaded.raw),
        raw: &loaded.raw,
        prepared: &prepared,
        seeds,
        base: if cli.bits {
            LogBase::Bits
        } else {
            LogBase::Nats
        },
    };
    action(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gram-profile: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
