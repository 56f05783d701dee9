mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use viewflow::data::ClickRule;

use crate::config::{ClientKind, DataFormat};

#[derive(Parser)]
#[command(name = "viewflow", version, about = "Two-flow news recommender pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct GlobalArgs {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log verbosity (error, warn, info, debug)
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
}

/// Paths shared by the commands that read a prepared dataset.
#[derive(Args, Clone, Default)]
pub struct DataArgs {
    /// Canonical JSONL dataset [default: <out>/dataset.jsonl]
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Profile texts [default: <out>/profiles.jsonl when present]
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Precomputed text embeddings [default: hashed embedder]
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset with a planted click rule
    Synth {
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        articles: Option<usize>,
        #[arg(long)]
        impressions: Option<usize>,
    },
    /// Parse MIND TSV or JSONL input into the canonical JSONL dataset
    Ingest {
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
        /// JSONL input
        #[arg(long)]
        input: Option<PathBuf>,
        /// MIND news.tsv
        #[arg(long)]
        news: Option<PathBuf>,
        /// MIND behaviors.tsv
        #[arg(long)]
        behaviors: Option<PathBuf>,
    },
    /// Summarize article bodies and write user profiles
    Summarize {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        client: Option<ClientKind>,
        /// Recorded completions for the replay client
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Stub summary budget in words
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Run the frozen text embedder and store every embedding
    Encode {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train a model and write the best checkpoint
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        steps: Option<usize>,
        /// Disable the instant (attention) flow
        #[arg(long)]
        no_instant: bool,
        /// Disable the constant (profile) flow
        #[arg(long)]
        no_constant: bool,
    },
    /// Evaluate a checkpoint on a dataset
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also report AUC pooled over all impressions
        #[arg(long)]
        global_auc: bool,
        /// Evaluate only the time-based validation split
        #[arg(long)]
        val_only: bool,
    },
    /// Precompute article representations and user profiles for serving
    Precompute {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Serve POST /rank and GET /health
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        /// Listen address, e.g. 127.0.0.1:8080 (port 0 picks a free port)
        #[arg(long)]
        addr: Option<String>,
    },
    /// Rank candidates for a user, in-process or against a running server
    Rank {
        #[arg(long)]
        user: String,
        /// Comma-separated candidate article ids
        #[arg(long, value_delimiter = ',', required = true)]
        candidates: Vec<String>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Base URL of a running server, e.g. http://127.0.0.1:8080
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Dump attention weights and user/history similarities for one user
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        user: String,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum RuleArg {
    PlantedBilinear,
    TopicAffinity,
    MixedFlow,
}

impl From<RuleArg> for ClickRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::PlantedBilinear => ClickRule::PlantedBilinear,
            RuleArg::TopicAffinity => ClickRule::TopicAffinity,
            RuleArg::MixedFlow => ClickRule::MixedFlow,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_new(&cli.global.log)
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
