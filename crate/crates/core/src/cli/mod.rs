//! The `fjlab` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 mathematical
//! infeasibility (no decay rate, instability, infeasible budget), 4 I/O.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{FjError, Result};
use commands::Context;
use config::ExperimentConfig;
use output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "fjlab", version, about = "Tail bounds, strategy optimization and simulation for fork-join queues")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "fjlab-out")]
    pub out: PathBuf,

    /// Overrides the configured simulation seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Worker threads (all cores when unset).
    #[arg(long, global = true, value_name = "N", env = "FJLAB_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Evaluate the applicable tail bound on the sigma grid.
    Bound,
    /// Run the fork-join simulator.
    Simulate,
    /// Optimize the scheduling strategy against the bound.
    Optimize,
    /// Compare the bound with the simulated CCDF.
    Compare,
    /// Simulate a grid of parameter variations.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bound => "bound",
            Command::Simulate => "simulate",
            Command::Optimize => "optimize",
            Command::Compare => "compare",
            Command::Sweep => "sweep",
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| FjError::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| FjError::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

/// Runs a parsed command line and returns the files it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = load_config(cli)?;
    let seed = cli.seed.unwrap_or_else(|| cfg.seed());
    let out = OutputDir::create(&cli.out)?;
    let echo = out.write_text("config.echo.json", &(cfg.echo() + "\n"))?;
    let ctx = Context { out, seed, config_hash: cfg.hash() };
    let run = || match cli.command {
        Command::Bound => commands::cmd_bound(&cfg, &ctx),
        Command::Simulate => commands::cmd_simulate(&cfg, &ctx),
        Command::Optimize => commands::cmd_optimize(&cfg, &ctx),
        Command::Compare => commands::cmd_compare(&cfg, &ctx),
        Command::Sweep => commands::cmd_sweep(&cfg, &ctx),
    };
    let mut written = match cli.threads {
        Some(0) => return Err(FjError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| FjError::Config(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    written.insert(0, echo);
    Ok(written)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("fjlab {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
