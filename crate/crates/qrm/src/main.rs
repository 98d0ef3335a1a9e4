use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qrm_sim::output::{write_bundle, WriteOptions};
use qrm_sim::{load_config, parse_config, run, worker_count, CliError, Experiment, Format, Workers};

/// Simulate the extended quantum Rabi model and emulate trapped-ion experiments.
#[derive(Parser, Debug)]
#[command(name = "qrm", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (capped by QRM_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write PNG plots and gnuplot data.
    #[arg(long)]
    plots: bool,
    /// Only validate the config.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(failure)) => {
            eprintln!("{}", serde_json::json!({ "error": "check", "exit_code": 3, "messages": [failure] }));
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<Option<String>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => parse_config("")?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(format) = cli.format {
        cfg.output.format = format;
    }
    cfg.output.plots |= cli.plots;
    cfg.validate(cli.experiment)?;
    if cli.check {
        return Ok(None);
    }
    let workers = Workers::new(worker_count(cli.workers))?;
    let bundle = run(&cfg, cli.experiment, &workers)?;
    let opts = WriteOptions { dir: cfg.output.dir.clone(), format: cfg.output.format, plots: cfg.output.plots };
    let files = write_bundle(&bundle, &cfg, &opts)?;
    println!("{}: wrote {} files to {}", cli.experiment, files.len(), opts.dir.display());
    Ok(bundle.failure)
}
