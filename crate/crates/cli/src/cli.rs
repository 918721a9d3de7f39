use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Synthetic click logs, one-pass training and replay evaluation for the
/// OFF-Set recommender.
///
/// Exit codes: 0 success, 1 invalid config, 2 I/O failure, 3 data or schema
/// mismatch.
#[derive(Debug, Parser)]
#[command(name = "offset", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic click log from CTR-lift rules
    Generate(GenerateArgs),
    /// Replay click logs through OFF-Set and the baselines and report MRR
    Replay(ReplayArgs),
    /// Summarize a saved model snapshot
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config file (TOML)
    #[arg(long, short, conflicts_with = "preset")]
    pub config: Option<PathBuf>,

    /// Built-in config preset, e.g. "paper-synthetic"
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Generator seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Number of impressions to generate
    #[arg(long, short = 'n')]
    pub samples: Option<u64>,

    /// Rule set: table2_stable, table2_trending, or a rules file
    #[arg(long)]
    pub rules: Option<String>,

    /// Rule set that takes over at the trend switch
    #[arg(long)]
    pub switch_rules: Option<String>,

    /// Number of impressions generated before the rules switch
    #[arg(long, requires = "switch_rules")]
    pub trend_switch: Option<u64>,

    /// Output log path
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Single log replayed online: every click is ranked, then trained on
    #[arg(long, conflicts_with_all = ["train", "test"])]
    pub log: Option<PathBuf>,

    /// Training-only log, replayed before the test log
    #[arg(long, requires = "test")]
    pub train: Option<PathBuf>,

    /// Evaluated log for train-then-test runs
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,

    /// OFF-Set learning rate
    #[arg(long)]
    pub alpha: Option<f64>,

    /// OFF-Set initialization and layout seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Resume OFF-Set from a snapshot; its trainer settings are kept
    #[arg(long)]
    pub snapshot_in: Option<PathBuf>,

    /// Save the final OFF-Set model here
    #[arg(long)]
    pub snapshot_out: Option<PathBuf>,

    /// Write the key-value report here
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Write the tab-separated MRR table here
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Snapshot file written by `offset replay --snapshot-out`
    pub snapshot: PathBuf,
}
