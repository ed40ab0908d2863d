//! `spnfault` command-line front end.

mod commands;
mod config;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use spnfault::stochastic::RacePolicy;

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "spnfault",
    version,
    about = "Fault diagnosis with stochastic Petri nets mined from sensor windows"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by all commands. Flags override the config file.
#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of k-means clusters (states).
    #[arg(long, short, global = true)]
    k: Option<usize>,
    /// Discovery algorithm: imf or hm.
    #[arg(long, global = true)]
    miner: Option<String>,
    #[arg(long, global = true)]
    noise_threshold: Option<f64>,
    #[arg(long, global = true)]
    n_sims: Option<usize>,
    /// immediate_silent or uniform_preselection.
    #[arg(long, global = true)]
    race_policy: Option<RacePolicy>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or load labeled windows and write train/test splits.
    Synth,
    /// Build the fault dictionary from the training split.
    Build {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        dictionary: Option<PathBuf>,
    },
    /// Classify windows against a stored dictionary.
    Diagnose {
        #[arg(long)]
        dictionary: Option<PathBuf>,
        /// Windows CSV; defaults to the dataset's test split.
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// K x miner table with repeated runs.
    Sweep {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// F1 against training-set detection accuracy.
    Ablate {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Write DOT files for a dictionary's nets or a single net.json.
    ExportDot {
        #[arg(long, conflicts_with = "net")]
        dictionary: Option<PathBuf>,
        #[arg(long)]
        net: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &common.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.k {
        cfg.dictionary.k = v;
    }
    if let Some(v) = &common.miner {
        cfg.dictionary.miner = v.clone();
    }
    if let Some(v) = common.noise_threshold {
        cfg.dictionary.noise_threshold = v;
    }
    if let Some(v) = common.n_sims {
        cfg.dictionary.n_sims = v;
    }
    if let Some(v) = common.race_policy {
        cfg.dictionary.race_policy = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Synth => commands::synth(&cfg).map(drop),
        Command::Build {
            dataset,
            dictionary,
        } => commands::build(&cfg, dataset, dictionary).map(drop),
        Command::Diagnose {
            dictionary,
            windows,
        } => commands::diagnose(&cfg, dictionary, windows).map(drop),
        Command::Sweep { dataset } => commands::sweep(&cfg, dataset).map(drop),
        Command::Ablate { dataset } => commands::ablate(&cfg, dataset).map(drop),
        Command::ExportDot { dictionary, net } => {
            commands::export_dot_files(&cfg, dictionary, net).map(drop)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
