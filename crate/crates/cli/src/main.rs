use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rqj_cli::{execute, ConfigError, RawConfig, RunConfig};

/// Simulate a strongly driven atom in a cavity under homodyne detection.
#[derive(Debug, Parser)]
#[command(name = "rqj", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ME_STEADY, SME_TRAJ, PFE_TRAJ, ENSEMBLE, SCALING or QFUNC.
    #[arg(long)]
    mode: Option<String>,
    /// Base seed of all noise streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to RQJ_WORKERS, then the core count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn worker_count(flag: Option<usize>) -> Result<usize, String> {
    let n = match (flag, std::env::var("RQJ_WORKERS")) {
        (Some(n), _) => n,
        (None, Ok(v)) => v
            .trim()
            .parse()
            .map_err(|_| format!("RQJ_WORKERS = {v:?} is not a worker count"))?,
        (None, Err(_)) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if n == 0 {
        return Err("worker count must be >= 1".into());
    }
    Ok(n)
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    for assignment in &cli.overrides {
        raw.set_override(assignment)?;
    }
    if let Some(mode) = &cli.mode {
        raw.set("mode", mode);
    }
    if let Some(seed) = cli.seed {
        raw.set("base_seed", &seed.to_string());
    }
    if let Some(out) = &cli.out {
        raw.set("output_dir", &out.display().to_string());
    }
    RunConfig::from_raw(raw)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let workers = match worker_count(cli.workers) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    log::info!("{} run into {}", config.mode, config.output_dir.display());
    match execute(&config, workers) {
        Ok(outcome) if outcome.succeeded() => {
            println!("wrote {} files to {}", outcome.files.len(), outcome.output_dir.display());
            ExitCode::SUCCESS
        }
        Ok(outcome) => {
            let reason = outcome.error.as_deref().unwrap_or("a run stopped early");
            eprintln!("error: {reason}; outputs in {} are marked incomplete", outcome.output_dir.display());
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: cannot write outputs: {e}");
            ExitCode::FAILURE
        }
    }
}
