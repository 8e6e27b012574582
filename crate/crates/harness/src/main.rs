//! Command-line entry point.
//!
//! Subcommands: `run` (single experiment), `suite` (experiment list with
//! seed expansion), `verify` (property-check battery), `gen-data`
//! (synthetic dataset to CSV). Exit codes: 0 success, 1 experiment or
//! check failure, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use anl_core::data::{gen_gaussian_blobs_with_sep, save_csv};
use anl_core::verify::{reports_to_jsonl, run_standard_checks};
use anl_core::DEFAULT_P_MIN;
use anl_harness::{
    emit_metrics, run_experiment, run_suite, ExperimentConfig, HarnessError, OutputFormat,
    SuiteSpec,
};

#[derive(Parser)]
#[command(name = "anl", about = "Noisy-label loss laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's metrics output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics format: csv or jsonl.
        #[arg(long)]
        format: Option<String>,
    },
    /// Run a list of experiments (with per-config seed lists) and print a
    /// mean/std summary per cell. The property checks run first and must
    /// pass.
    Suite {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for independent runs.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Write the summary table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property-check battery and print one line per check.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write machine-readable results (one JSON record per check).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a Gaussian-blob dataset and write it as CSV.
    GenData {
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        per_class: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        /// Absolute minimum center separation; defaults to 4 * spread.
        #[arg(long)]
        center_sep: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_format(s: &str) -> Result<OutputFormat, HarnessError> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "jsonl" => Ok(OutputFormat::Jsonl),
        other => Err(HarnessError::config(
            "--format",
            format!("expected 'csv' or 'jsonl', got '{other}'"),
        )),
    }
}

fn cmd_run(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<String>,
) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = out {
        cfg.out = Some(out);
    }
    if let Some(format) = format {
        cfg.format = parse_format(&format)?;
    }
    cfg.validate()?;
    let records = run_experiment(&cfg)?;
    if let Some(path) = &cfg.out {
        emit_metrics(&records, path, cfg.format)?;
        eprintln!("metrics written to {}", path.display());
    }
    if let Some(last) = records.last() {
        println!(
            "{} seed={} final_epoch={} test_acc={:.4} train_acc_clean={:.4} train_acc_noisy={:.4}",
            cfg.label(),
            cfg.seed,
            last.epoch,
            last.test_acc,
            last.train_acc_clean,
            last.train_acc_noisy
        );
    }
    Ok(())
}

fn cmd_suite(config: PathBuf, parallel: usize, out: Option<PathBuf>) -> Result<bool, HarnessError> {
    let spec = SuiteSpec::load(&config)?;
    for (i, cfg) in spec.experiments.iter().enumerate() {
        cfg.validate()
            .map_err(|e| HarnessError::config(format!("experiments[{i}]"), e.to_string()))?;
    }
    // The check battery gates the suite: no green summary over a broken
    // loss stack.
    eprintln!("running property checks before the suite...");
    let reports = run_standard_checks(1, DEFAULT_P_MIN)?;
    let mut checks_ok = true;
    for report in &reports {
        if !report.passed() {
            eprintln!("{}", report.summary_line());
            checks_ok = false;
        }
    }
    if !checks_ok {
        eprintln!("property checks failed; aborting the suite");
        return Ok(false);
    }
    eprintln!("property checks passed ({} checks)", reports.len());
    let outcome = run_suite(&spec, parallel);
    print!("{}", outcome.summary_table());
    for failure in &outcome.failures {
        eprintln!(
            "FAILED {} seed={}: {}",
            failure.name, failure.seed, failure.message
        );
    }
    if let Some(path) = out {
        std::fs::write(&path, outcome.summary_csv())
            .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
        eprintln!("summary written to {}", path.display());
    }
    Ok(outcome.all_green())
}

fn cmd_verify(seed: u64, out: Option<PathBuf>) -> Result<bool, HarnessError> {
    let reports = run_standard_checks(seed, DEFAULT_P_MIN)?;
    let mut ok = true;
    for report in &reports {
        println!("{}", report.summary_line());
        ok &= report.passed();
    }
    if let Some(path) = out {
        std::fs::write(&path, reports_to_jsonl(&reports))
            .map_err(|e| HarnessError::io(path.display().to_string(), e))?;
        eprintln!("results written to {}", path.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<bool, HarnessError> = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            format,
        } => cmd_run(config, seed, out, format).map(|_| true),
        Command::Suite {
            config,
            parallel,
            out,
        } => cmd_suite(config, parallel, out),
        Command::Verify { seed, out } => cmd_verify(seed, out),
        Command::GenData {
            k,
            per_class,
            dim,
            spread,
            center_sep,
            seed,
            out,
        } => (|| {
            let sep = center_sep.unwrap_or(4.0 * spread);
            let ds = gen_gaussian_blobs_with_sep(k, per_class, dim, spread, sep, seed)
                .map_err(|e| HarnessError::config("gen-data", e.to_string()))?;
            save_csv(&ds, &out)?;
            eprintln!("{} samples written to {}", ds.n(), out.display());
            Ok(true)
        })(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
