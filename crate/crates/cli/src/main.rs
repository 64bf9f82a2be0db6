//! `staticnoise` experiment runner.

mod compare;
mod config;
mod error;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use staticnoise::oracle::Execution;

use crate::compare::Thresholds;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::run::RunOptions;

/// Thread count for the Monte Carlo pool.
const THREADS_VAR: &str = "STATICNOISE_THREADS";

#[derive(Parser)]
#[command(name = "staticnoise", version, about = "Ensemble-averaged dynamics under static noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result bundle.
    Run {
        /// Path to a TOML config.
        #[arg(required_unless_present = "bundled", conflicts_with = "bundled")]
        config: Option<PathBuf>,
        /// Use a built-in config instead (see `list-bundled`).
        #[arg(long)]
        bundled: Option<String>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep a Monte Carlo checkpoint in the output directory and resume from it.
        #[arg(long)]
        checkpoint: bool,
        /// Run realizations on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Compare the stored states of two runs time by time.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Series of run A: `me` or `mc` (default: `me` if present).
        #[arg(long)]
        a_source: Option<String>,
        #[arg(long)]
        b_source: Option<String>,
        #[arg(long, default_value_t = 0.999)]
        min_fidelity: f64,
        #[arg(long, default_value_t = 0.10)]
        max_purity_deviation: f64,
        /// Write the per-time comparison to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// List built-in configs.
    ListBundled {
        /// Print the TOML of one config.
        #[arg(long)]
        show: Option<String>,
    },
    /// Check a config without running it; prints the resolved config.
    Validate {
        #[arg(required_unless_present = "bundled", conflicts_with = "bundled")]
        config: Option<PathBuf>,
        #[arg(long)]
        bundled: Option<String>,
    },
}

fn load(config: Option<PathBuf>, bundled: Option<String>) -> Result<ExperimentConfig, CliError> {
    match (config, bundled) {
        (_, Some(name)) => ExperimentConfig::parse(config::bundled(&name)?.text),
        (Some(path), None) => ExperimentConfig::load(&path),
        (None, None) => Err(CliError::Config("no config given".into())),
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Run { config, bundled, out: dir, checkpoint, sequential } => {
            init_threads()?;
            let prepared = load(config, bundled)?.prepare()?;
            let execution = if sequential { Execution::Sequential } else { Execution::Parallel };
            let (dir, summary) = run::run(&prepared, &RunOptions { out: dir, checkpoint, execution })?;
            writeln!(out, "{}", serde_json::json!({ "dir": dir, "summary": summary }))?;
        }
        Command::Compare { a, b, a_source, b_source, min_fidelity, max_purity_deviation, csv } => {
            let sa = compare::load(&compare::locate(&a, a_source.as_deref())?)?;
            let sb = compare::load(&compare::locate(&b, b_source.as_deref())?)?;
            let cmp = compare::compare(&sa, &sb)?;
            if let Some(path) = csv {
                cmp.write_csv(&path)?;
            }
            let report = cmp.report(Thresholds { min_fidelity, max_purity_deviation });
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Command::ListBundled { show: Some(name) } => {
            write!(out, "{}", config::bundled(&name)?.text)?;
        }
        Command::ListBundled { show: None } => {
            for b in config::BUNDLED {
                writeln!(out, "{:<14} {}", b.name, b.summary)?;
            }
        }
        Command::Validate { config, bundled } => {
            let prepared = load(config, bundled)?.prepare()?;
            writeln!(out, "{}", serde_json::to_string_pretty(&prepared.config)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
