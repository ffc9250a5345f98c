use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mmv_core::cmat::{decode, encode};
use mmv_core::metrics::coherence_metrics;
use mmv_core::model::{gaussian_pilots, seeded_rng};
use mmv_harness::{
    emit_results, format_number, import_matrix, run_calibration, run_sweep, write_results,
    ExperimentConfig, ExperimentRecord, RunOptions,
};

/// Seeded Monte-Carlo experiments for grant-free random access recovery.
#[derive(Parser)]
#[command(name = "mmv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver over the sweep and write the result table.
    Sweep(RunArgs),
    /// Calibrate detection thresholds only.
    Calibrate(RunArgs),
    /// Coherence measures of a pilot matrix.
    Coherence(CoherenceArgs),
    /// Check that a `.cmat` file decodes and re-encodes to identical bytes.
    RoundtripCheck { path: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    root_seed: Option<u64>,
    #[arg(long)]
    calibration_trials: Option<usize>,
    #[arg(long)]
    validation_trials: Option<usize>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Leave `ms_per_trial` empty so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.root_seed {
            cfg.root_seed = s;
        }
        if let Some(c) = self.calibration_trials {
            cfg.calibration_trials = c;
        }
        if let Some(v) = self.validation_trials {
            cfg.validation_trials = v;
        }
        if let Some(v) = &self.values {
            cfg.sweep.values = v.clone();
        }
        if self.no_timing {
            cfg.timing = false;
        }
        Ok(cfg)
    }

    fn emit(&self, records: &[ExperimentRecord]) -> Result<()> {
        match &self.output {
            Some(path) => emit_results(records, path)?,
            None => write_results(records, io::stdout().lock())?,
        }
        Ok(())
    }
}

#[derive(Args)]
struct CoherenceArgs {
    /// `.cmat` pilot matrix; a seeded Gaussian matrix is drawn when absent.
    #[arg(long)]
    pilots: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    group_size: usize,
    #[arg(long, default_value_t = 12)]
    l: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep(args) => {
            let records = run_sweep(&args.load()?, &RunOptions::from_env()?)?;
            args.emit(&records)?;
        }
        Command::Calibrate(args) => {
            let records = run_calibration(&args.load()?, &RunOptions::from_env()?)?;
            args.emit(&records)?;
        }
        Command::Coherence(args) => {
            let a = match &args.pilots {
                Some(path) => import_matrix(path)?,
                None => gaussian_pilots(args.l, args.n, true, &mut seeded_rng(args.seed)),
            };
            let c = coherence_metrics(&a, args.group_size)?;
            println!("measure,value");
            for (name, v) in [
                ("mu", c.mu),
                ("mu_block", c.mu_block),
                ("nu_sub", c.nu_sub),
                ("mu_block_group_mean", c.mu_block_group_mean),
                ("nu_sub_group_mean", c.nu_sub_group_mean),
            ] {
                println!("{name},{}", format_number(v));
            }
        }
        Command::RoundtripCheck { path } => {
            let bytes =
                std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let m = decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
            if encode(&m)? != bytes {
                bail!("{} does not re-encode to identical bytes", path.display());
            }
            println!("ok {}x{} {}", m.rows(), m.cols(), path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
