//! `rough-vol-kit <command> --config <file> [--seed S] [--threads K] [--force]`
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use commands::{NumericalFailure, Run};
use config::{Config, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Fit an SOE kernel and tabulate L2 errors of both approaches.
    KernelFit,
    /// Simulate (S, V) and Volterra paths.
    Simulate,
    /// Implied-vol smiles per scheme and their gap to the exact scheme.
    Smile,
    /// First and second moment RMSEs of the Volterra approximation.
    Moments,
    /// Terminal-price dataset under a target forward variance curve.
    GenData,
    /// Fit the neural forward variance curve to a dataset.
    Train,
    /// Compare a trained network with the data and the untrained network.
    Evaluate,
    /// Tape gradients against central finite differences.
    GradCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::KernelFit => "kernel-fit",
            Command::Simulate => "simulate",
            Command::Smile => "smile",
            Command::Moments => "moments",
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::GradCheck => "grad-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rough-vol-kit", version, about = "Rough Bergomi simulation, pricing and forward-variance learning")]
struct Cli {
    command: Command,
    /// Flat `key = value` experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Allow writing into a nonempty out_dir.
    #[arg(long)]
    force: bool,
}

/// Error type marking an I/O problem with the output directory.
#[derive(Debug)]
struct OutDirError(String);

impl std::fmt::Display for OutDirError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for OutDirError {}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let nonempty = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if nonempty && !force {
            bail!(OutDirError(format!(
                "out_dir {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = Config::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.set("seed", s.to_string());
    }
    if let Some(k) = cli.threads {
        if k == 0 {
            bail!(ConfigError("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("starting the thread pool")?;
    }
    let seed: u64 = cfg.get("seed", 0)?;
    let out = PathBuf::from(cfg.require::<String>("out_dir")?);
    prepare_out_dir(&out, cli.force)?;
    let r = Run { cfg: &cfg, seed, out };
    let result = match cli.command {
        Command::KernelFit => commands::kernel_fit(&r),
        Command::Simulate => commands::simulate(&r),
        Command::Smile => commands::smile_cmd(&r),
        Command::Moments => commands::moments(&r),
        Command::GenData => commands::gen_data(&r),
        Command::Train => commands::train_cmd(&r),
        Command::Evaluate => commands::evaluate(&r),
        Command::GradCheck => commands::grad_check_cmd(&r),
    };
    let resolved = r.out.join("config.resolved");
    fs::write(&resolved, cfg.resolved_text(cli.command.name()))
        .with_context(|| format!("writing {}", resolved.display()))?;
    result
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use rough_vol_core::Error as E;
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<clap::Error>() {
            return 2;
        }
        if cause.is::<NumericalFailure>() {
            return 3;
        }
        if cause.is::<OutDirError>() || cause.is::<std::io::Error>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Domain(_) => 2,
                E::Io(_) | E::Parse(_) => 4,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
