//! Multi-experiment runner: seed expansion, bounded parallelism, and
//! mean/standard-deviation aggregation of final test accuracy per cell.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use anl_core::numeric::{mean, sample_std};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{final_test_acc, run_experiment};
use crate::metrics::{emit_metrics, MetricsRecord};

/// A list of experiments to run; each entry may carry a `seeds` list,
/// which expands into one run per seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub experiments: Vec<ExperimentConfig>,
}

impl SuiteSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| {
            HarnessError::config(
                path.display().to_string(),
                format!("cannot read suite file: {e}"),
            )
        })?;
        serde_json::from_str(&content).map_err(|e| {
            HarnessError::config(path.display().to_string(), format!("invalid suite JSON: {e}"))
        })
    }
}

/// Aggregated outcome for one experiment cell (all its seeds).
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub name: String,
    pub seeds: Vec<u64>,
    pub final_test_accs: Vec<f64>,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
}

/// A failed run, reported without aborting sibling runs.
#[derive(Debug)]
pub struct CellFailure {
    pub name: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug)]
pub struct SuiteOutcome {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
}

impl SuiteOutcome {
    pub fn all_green(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::from("name                          runs  mean_test_acc  std_test_acc\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{:<28}  {:>4}  {:>13.4}  {:>12.4}\n",
                row.name,
                row.seeds.len(),
                row.mean_test_acc,
                row.std_test_acc
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("name,runs,mean_test_acc,std_test_acc\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e}\n",
                row.name,
                row.seeds.len(),
                row.mean_test_acc,
                row.std_test_acc
            ));
        }
        out
    }
}

/// Output path for one run: the configured path with a per-seed suffix
/// when the cell expands to several seeds.
fn run_out_path(base: &Path, seed: u64, multi: bool) -> PathBuf {
    if !multi {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "metrics".to_string());
    let ext = base
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".to_string());
    base.with_file_name(format!("{stem}_seed{seed}.{ext}"))
}

struct Job {
    cell: usize,
    name: String,
    seed: u64,
    config: ExperimentConfig,
    multi: bool,
}

/// Runs every experiment (with seed expansion) using up to `parallelism`
/// worker threads. Deterministic per run; aggregation order follows the
/// spec order regardless of scheduling.
pub fn run_suite(spec: &SuiteSpec, parallelism: usize) -> SuiteOutcome {
    let mut jobs = Vec::new();
    for (cell, cfg) in spec.experiments.iter().enumerate() {
        let name = cfg.label();
        let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
        let multi = seeds.len() > 1;
        for seed in seeds {
            jobs.push(Job {
                cell,
                name: name.clone(),
                seed,
                config: cfg.with_seed(seed),
                multi,
            });
        }
    }
    let n_jobs = jobs.len();
    let queue: Mutex<VecDeque<(usize, Job)>> = Mutex::new(jobs.into_iter().enumerate().collect());
    type JobResult = (usize, std::result::Result<(Vec<MetricsRecord>, Job), (Job, String)>);
    let results: Mutex<Vec<Option<JobResult>>> = Mutex::new((0..n_jobs).map(|_| None).collect());
    let workers = parallelism.max(1).min(n_jobs.max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = {
                    let mut q = queue.lock().unwrap();
                    q.pop_front()
                };
                let Some((idx, job)) = job else { break };
                let outcome = match run_experiment(&job.config) {
                    Ok(records) => {
                        let write = job.config.out.as_ref().map(|base| {
                            let path = run_out_path(base, job.seed, job.multi);
                            emit_metrics(&records, &path, job.config.format)
                        });
                        match write {
                            Some(Err(e)) => Err((job, e.to_string())),
                            _ => Ok((records, job)),
                        }
                    }
                    Err(e) => Err((job, e.to_string())),
                };
                results.lock().unwrap()[idx] = Some((idx, outcome));
            });
        }
    });

    let mut per_cell: Vec<(String, Vec<(u64, f64)>)> = spec
        .experiments
        .iter()
        .map(|c| (c.label(), Vec::new()))
        .collect();
    let mut failures = Vec::new();
    for slot in results.into_inner().unwrap() {
        let (_, outcome) = slot.expect("every job produces a result");
        match outcome {
            Ok((records, job)) => {
                per_cell[job.cell].1.push((job.seed, final_test_acc(&records)));
            }
            Err((job, message)) => failures.push(CellFailure {
                name: job.name,
                seed: job.seed,
                message,
            }),
        }
    }
    let rows = per_cell
        .into_iter()
        .filter(|(_, runs)| !runs.is_empty())
        .map(|(name, runs)| {
            let seeds: Vec<u64> = runs.iter().map(|(s, _)| *s).collect();
            let accs: Vec<f64> = runs.iter().map(|(_, a)| *a).collect();
            SummaryRow {
                name,
                mean_test_acc: mean(&accs),
                std_test_acc: sample_std(&accs),
                seeds,
                final_test_accs: accs,
            }
        })
        .collect();
    SuiteOutcome { rows, failures }
}
