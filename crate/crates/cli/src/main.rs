//! `ddsim`: run decoupling experiments from config files or presets.

mod config;
mod error;
mod presets;
mod runner;

use clap::{Args, Parser, Subcommand};
use config::{load_config, parse_config, RunConfig};
use error::{CliError, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "ddsim", version, about = "Dynamical-decoupling simulator for a two-qubit conditional gate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a shipped preset, or print its config with --show.
    Preset {
        name: String,
        #[arg(long)]
        show: bool,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// List the shipped presets.
    List,
}

#[derive(Args)]
struct RunOpts {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to `output_dir` or `ddsim-out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(mut cfg: RunConfig, name: &str, opts: &RunOpts) -> Result<()> {
    if let Some(k) = opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("ddsim-out").join(name));
    let started = Instant::now();
    let output = runner::execute(&cfg)?;
    runner::write_outputs(&cfg, &output, &dir, started)?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} -> {} ({:.1} s)", name, dir.display(), started.elapsed().as_secs_f64());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, opts } => {
            let cfg = load_config(&config)?;
            let name = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            run(cfg, &name, &opts)
        }
        Command::Preset { name, show, opts } => {
            let preset = presets::find(&name)
                .ok_or_else(|| CliError::Config(format!("no preset named `{name}` (see `ddsim list`)")))?;
            if show {
                print!("{}", preset.source);
                return Ok(());
            }
            run(parse_config(preset.source)?, preset.name, &opts)
        }
        Command::List => {
            for p in presets::PRESETS {
                println!("{:<18} {}", p.name, p.description);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
