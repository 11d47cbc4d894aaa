//! `graph-ttt`: ingest graph datasets, train GNNs jointly with
//! self-supervised objectives, evaluate with test-time adaptation, compare
//! representations and check the supporting inequalities numerically.

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graph_ttt::graphdata::{DataError, SplitKind};
use graph_ttt::theory::Surrogate;
use graph_ttt::ttt::EvalMode;

use settings::{InputError, Violation};

#[derive(Debug, Parser)]
#[command(name = "graph-ttt", version, about = "Graph test-time training experiments")]
struct Cli {
    /// Worker threads for training batches and per-sample adaptation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Config file plus overrides, shared by the experiment commands.
#[derive(Debug, Args, Clone)]
struct ConfigArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a TUDataset directory and summarise it.
    Ingest {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        name: String,
        /// Only parse and report; write nothing.
        #[arg(long)]
        validate_only: bool,
        /// Where the dataset summary JSON goes.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write a synthetic motif dataset in TUDataset format.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "SYNTH")]
        name: String,
    },
    /// Compute train/validation/test indices.
    Split {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        kind: Option<SplitKind>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<output_dir>/split.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and save its checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Train on the classification loss alone (gamma = 0).
        #[arg(long)]
        raw: bool,
        /// Split JSON from `split`; recomputed from the config otherwise.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Defaults to `<output_dir>/{raw,joint}.ckpt.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        mode: EvalMode,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Layer-wise CKA between models trained on single tasks.
    Cka {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Randomized check of a theorem's inequalities.
    Verify {
        #[arg(long)]
        theorem: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value = "squared_distance")]
        surrogate: Surrogate,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split, train and evaluate every configured mode.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<Violation>()) {
        return 3;
    }
    let input = err.chain().any(|c| {
        c.is::<InputError>()
            || c.is::<DataError>()
            || c.is::<std::io::Error>()
            || c.is::<serde_json::Error>()
            || c.is::<graph_ttt::config::ConfigError>()
            || matches!(
                c.downcast_ref::<graph_ttt::ttt::TttError>(),
                Some(graph_ttt::ttt::TttError::Input(_) | graph_ttt::ttt::TttError::Config { .. })
            )
    });
    if input {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::dispatch(cli.command, cli.jobs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
