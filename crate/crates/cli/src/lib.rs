//! Batch driver: configuration, the four workflows (`verify`, `sweep`,
//! `estimate`, `oracle`) and their output files.
//!
//! Every data file is a deterministic function of the config and root seed.
//! Wall-clock information goes to `metadata.json` only.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimate;
pub mod oracle;
pub mod sweep;
pub mod verify;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nosig_core::protocol::{prepare, PreparedSetting};
use nosig_core::spin::MeasurementAxis;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{Overrides, RunConfig};
pub use error::CliError;

/// Sub-stream of the root seed used by `estimate`.
pub const ESTIMATE_STREAM: u64 = 0;
/// Sub-stream of the root seed used by the sample-level checks of `verify`.
pub const VERIFY_STREAM: u64 = 1;

/// Result of a workflow that completed without a hard error.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

impl CommandOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Sweep,
    Estimate,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Estimate => "estimate",
            Command::Oracle => "oracle",
        }
    }
}

/// Runs `command` and writes its data file plus `metadata.json` under the
/// configured output directory.
pub fn run(command: Command, config: &RunConfig, overrides: &Overrides) -> Result<CommandOutcome, CliError> {
    let started = unix_seconds();
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let inject = overrides.inject_violation;
    let mut outcome = match command {
        Command::Verify => verify::cmd_verify(config, inject)?,
        Command::Sweep => sweep::cmd_sweep(config, inject)?,
        Command::Estimate => estimate::cmd_estimate(config, inject)?,
        Command::Oracle => oracle::cmd_oracle(config)?,
    };
    let meta = Metadata {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        root_seed: config.root_seed,
        inject_violation: inject,
        passed: outcome.passed,
        started_unix: started,
        finished_unix: unix_seconds(),
        files: outcome.files.iter().map(|p| p.display().to_string()).collect(),
        config,
    };
    outcome.files.push(write_json(dir, "metadata.json", &meta)?);
    Ok(outcome)
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'static str,
    version: &'static str,
    root_seed: u64,
    inject_violation: f64,
    passed: bool,
    started_unix: f64,
    finished_unix: f64,
    files: Vec<String>,
    config: &'a RunConfig,
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub(crate) fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Runs the θ-independent part of the pipeline for every Alice setting, in
/// parallel; the result is in `omega_list` order.
pub fn prepare_settings(config: &RunConfig, inject_violation: f64) -> Result<Vec<PreparedSetting>, CliError> {
    let opts = config.pipeline_options(inject_violation);
    config
        .omega_list
        .par_iter()
        .map(|&omega| prepare(&config.sg, MeasurementAxis::new(omega), &opts).map_err(CliError::from))
        .collect()
}
