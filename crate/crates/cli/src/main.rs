//! `apr`: dataset tooling, training, evaluation and experiment drivers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::Run;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "apr",
    version,
    about = "Joint identity/attribute re-identification toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute distribution and correlation reports.
    Stats,
    /// Write a synthetic dataset to the output directory.
    Synth,
    /// Train a model; writes checkpoint.apr and trainlog.csv.
    Train {
        #[arg(long, value_name = "K")]
        checkpoint_every: Option<usize>,
    },
    /// Retrieval and attribute evaluation.
    Eval {
        /// Evaluate a trained model instead of the raw features.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Train one model per λ and select by validation rank-1.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Leave-one-attribute-out retraining.
    Ablate,
    /// Retrieval as distractors are added to the gallery.
    Scale {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.merge_file(path)?;
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    match &cli.command {
        Command::Train {
            checkpoint_every: Some(k),
        } => cfg.set("train.checkpoint_every", &k.to_string())?,
        Command::Eval {
            checkpoint: Some(p),
        } => cfg.set("checkpoint", &p.to_string_lossy())?,
        Command::Sweep { lambdas: Some(l) } => cfg.set("sweep.lambdas", &join(l))?,
        Command::Scale { checkpoint, sizes } => {
            if let Some(p) = checkpoint {
                cfg.set("checkpoint", &p.to_string_lossy())?;
            }
            if let Some(s) = sizes {
                cfg.set("scale.sizes", &join(s))?;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

#[cfg(feature = "parallel")]
fn init_threads(n: usize) -> Result<()> {
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_threads(n: usize) -> Result<()> {
    if n > 1 {
        log::warn!("built without the parallel feature; --threads {n} ignored");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    // Not a config key, so run.json is identical across thread counts.
    init_threads(cli.threads.unwrap_or(0))?;
    let run = Run { cfg, out: cli.out };
    run.begin()?;
    match cli.command {
        Command::Stats => commands::stats(&run),
        Command::Synth => commands::synth(&run),
        Command::Train { .. } => commands::train(&run),
        Command::Eval { .. } => commands::eval(&run),
        Command::Sweep { .. } => commands::sweep(&run),
        Command::Ablate => commands::ablate(&run),
        Command::Scale { .. } => commands::scale(&run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("apr: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
