//! `spdnn` command-line entry point.

/// `println!` that tolerates a closed stdout.
macro_rules! outln {
    () => {
        $crate::emit("\n")
    };
    ($($arg:tt)*) => {
        $crate::emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

mod commands;
mod files;
mod networks;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Merge, size, train and score iris-segmentation networks.
#[derive(Debug, Parser)]
#[command(name = "spdnn", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SPDNN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge parent chains into one architecture graph.
    Merge(commands::merge::Args),
    /// Solve for the channel base that fits a weight budget.
    Budget(commands::budget::Args),
    /// Write synthetic eye images with their iris masks.
    Datagen(commands::datagen::Args),
    /// Degrade labelled images with the four-stage pipeline.
    Augment(commands::augment::Args),
    /// Train a network on a directory of image/mask pairs.
    Train(commands::train::Args),
    /// Predict iris masks for a directory of images.
    Infer(commands::infer::Args),
    /// Score predicted masks against ground truth.
    Eval(commands::eval::Args),
}

/// Bad invocation detected after argument parsing; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Writes to stdout, treating a closed pipe as success.
pub fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Merge(a) => commands::merge::run(a),
        Command::Budget(a) => commands::budget::run(a),
        Command::Datagen(a) => commands::datagen::run(a),
        Command::Augment(a) => commands::augment::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Infer(a) => commands::infer::run(a),
        Command::Eval(a) => commands::eval::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
