//! `oac`: train, check, benchmark and evaluate OAC alignment models.

mod args;
mod check;
mod eval;
mod train;
mod warp;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use args::Dims;

/// Exit status for usage and configuration errors.
const EXIT_USAGE: u8 = 1;
/// Exit status when a numeric guard trips.
const EXIT_NUMERIC: u8 = 2;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<oac_core::Error> for Failure {
    fn from(e: oac_core::Error) -> Self {
        match e {
            oac_core::Error::Diverged { .. } | oac_core::Error::NonFinite(_) => Failure::Numeric(e.to_string()),
            e => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

pub type Outcome = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(name = "oac", version, about = "Offset-aware correlation kernels for semantic image alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on self-supervised synthetic pairs.
    ///
    /// Writes OUT_DIR/checkpoint/, OUT_DIR/loss.csv and the resolved
    /// configuration OUT_DIR/train.txt. Unset keys take their defaults:
    /// learning_rate 2e-4, batch_size 32, epochs 50.
    Train(train::TrainArgs),
    /// Compare the direct and reordered OAC paths on random instances.
    CheckEquiv {
        /// Feature grid height, width and kernel count.
        #[arg(long, default_value = "4x4x2")]
        dims: Dims,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mirror the reordered path's offset layout (negative control).
        #[arg(long, hide = true)]
        corrupt_layout: bool,
    },
    /// Multiplication counts and wall time of both OAC paths.
    Bench {
        /// Repeatable; defaults to 15x15x128.
        #[arg(long = "dims")]
        dims: Vec<Dims>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report TGD on synthetic pairs or PCK on annotated keypoints.
    Eval(eval::EvalArgs),
    /// Warp an image with a transform, or visualise a checkpoint's
    /// prediction on a synthetic pair.
    Warp(warp::WarpArgs),
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Train(a) => train::run(a),
        Command::CheckEquiv {
            dims,
            trials,
            seed,
            corrupt_layout,
        } => check::equivalence(dims, trials, seed, corrupt_layout),
        Command::Bench { dims, repeats, seed } => check::bench(dims, repeats, seed),
        Command::Eval(a) => eval::run(a),
        Command::Warp(a) => warp::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}
