mod evaluate;
mod fit;
mod manifest;
mod simulate;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

/// Forest graphical models with scale-free and joint structure priors.
#[derive(Debug, Parser)]
#[command(name = "forestprior", version, about)]
struct Cli {
    /// Worker threads (default: all available cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "FORESTPRIOR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample tree-structured copula data with known graphs.
    Simulate(simulate::Args),
    /// Estimate forests from training and held-out CSV files.
    Fit(fit::Args),
    /// Score estimated edge lists against true edge lists.
    Evaluate(evaluate::Args),
    /// Re-run a recorded command and check that every output digest matches.
    Replay(manifest::ReplayArgs),
}

impl Command {
    fn set_out(&mut self, dir: PathBuf) {
        match self {
            Command::Simulate(a) => a.out = dir,
            Command::Fit(a) => a.out = dir,
            Command::Evaluate(a) => a.out = dir,
            Command::Replay(_) => {}
        }
    }
}

/// Invalid flag combinations detected after parsing. Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// What a command reports besides hard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Results were written but some solver hit its iteration cap.
    NotConverged,
}

fn dispatch(args: Vec<OsString>) -> Result<Outcome> {
    let cli = Cli::try_parse_from(&args)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    run(cli.command, argv)
}

fn run(command: Command, argv: Vec<String>) -> Result<Outcome> {
    match command {
        Command::Simulate(a) => simulate::run(&a, argv),
        Command::Fit(a) => fit::run(&a, argv),
        Command::Evaluate(a) => evaluate::run(&a, argv),
        Command::Replay(a) => manifest::replay(&a),
    }
}

/// Re-parses a recorded argument list, sending outputs to `out`.
fn rerun(argv: &[String], out: PathBuf) -> Result<Outcome> {
    let args = std::iter::once("forestprior".to_owned()).chain(argv.iter().cloned());
    let cli = Cli::try_parse_from(args)?;
    let mut command = cli.command;
    if matches!(command, Command::Replay(_)) {
        return Err(usage("a manifest cannot record a replay"));
    }
    command.set_out(out.clone());
    run(command, manifest::with_out(argv, &out))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() || err.downcast_ref::<clap::Error>().is_some() {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(std::env::args_os().collect()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("warning: solver did not converge; results were written");
            ExitCode::from(3)
        }
        Err(err) => {
            if let Some(clap_err) = err.downcast_ref::<clap::Error>() {
                let _ = clap_err.print();
                return if clap_err.use_stderr() {
                    ExitCode::from(1)
                } else {
                    ExitCode::SUCCESS
                };
            }
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
