//! # anl-harness
//!
//! Seeded experiment harness over [`anl_core`]: JSON experiment configs,
//! a deterministic training loop with per-epoch metrics (including the
//! clean/noisy training-accuracy split), CSV/JSONL metrics files, a
//! multi-seed suite runner, and the property-check battery behind the
//! `anl verify` command.

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod suite;

pub use config::{ExperimentConfig, LossConfig, NoiseConfig, OutputFormat};
pub use error::{HarnessError, Result};
pub use experiment::{final_test_acc, prepare, run_experiment, run_prepared};
pub use metrics::{emit_metrics, MetricsRecord};
pub use suite::{run_suite, SuiteOutcome, SuiteSpec};
