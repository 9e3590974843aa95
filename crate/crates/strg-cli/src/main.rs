//! `strg`: online pedestrian trajectory prediction from the command
//! line. Exit codes: 0 success, 2 I/O or data-format failure, 3 usage
//! or semantic error, 4 numerical failure.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use strg::Error;

#[derive(Parser)]
#[command(name = "strg", version, about = "Online pedestrian trajectory prediction")]
struct Cli {
    /// Cap the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Window a raw trajectory file into a checksummed archive.
    Ingest {
        /// Raw trajectory file: frame ped x y [vx vy] per line.
        data: PathBuf,
        /// Optional scene occupancy map to validate alongside.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        obs: usize,
        #[arg(long, default_value_t = 12)]
        pred: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value_t = 20)]
        max_size: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a model online, leave-one-out over the configured datasets.
    Train {
        /// Run configuration (key = value lines).
        #[arg(short, long)]
        config: PathBuf,
        /// Model variant name, e.g. lstm_o, st, str_ggrnn_v.
        #[arg(long)]
        variant: String,
        /// Dataset name to hold out of training.
        #[arg(long)]
        hold_out: String,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a configured dataset.
    Eval {
        /// Checkpoint written by `train`.
        checkpoint: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        /// Dataset name to evaluate on.
        #[arg(long)]
        test: String,
        /// Proposal band size override.
        #[arg(short = 'P', long)]
        band_size: Option<usize>,
        /// Repetitions with derived seeds; metrics report mean/stddev.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Summarize proposal adjacency structure from a proposals CSV.
    Analyze {
        /// proposals.csv written by `train` (proposal,row,col,weight).
        input: PathBuf,
        /// Edge threshold: weights strictly above count as edges.
        #[arg(long, default_value_t = 1e-6)]
        tau: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Benchmark adjacency-proposal sampling throughput.
    Bench {
        /// Ascending sample counts to time.
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 2000, 10000, 20000])]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        crowd: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Factorization iterations per proposal.
        #[arg(long, default_value_t = 10)]
        nmf_iters: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> strg::Result<()> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(Error::Usage("--workers must be at least 1".into()));
        }
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match cli.command {
        Command::Ingest { data, scene, obs, pred, stride, max_size, out } => {
            commands::cmd_ingest(&data, scene.as_deref(), obs, pred, stride, max_size, &out)
        }
        Command::Train { config, variant, hold_out, seed, out } => {
            commands::cmd_train(&config, &variant, &hold_out, seed, &out)
        }
        Command::Eval { checkpoint, config, test, band_size, reps, seed, out } => {
            commands::cmd_eval(&checkpoint, &config, &test, band_size, reps, seed, &out)
        }
        Command::Analyze { input, tau, bins, out } => commands::cmd_analyze(&input, tau, bins, &out),
        Command::Bench { counts, crowd, reps, nmf_iters, out } => {
            commands::cmd_bench(&counts, crowd, reps, nmf_iters, &out)
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Format(_) => 2,
        Error::Usage(_) | Error::Domain(_) | Error::Dimension { .. } => 3,
        Error::NonFinite(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}
