//! `sweep`: one CSV row per (ω, θ), ω-major in config order.

use nosig_core::protocol::ProtocolResult;
use nosig_core::spin::MeasurementAxis;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{prepare_settings, CommandOutcome};

/// Frozen column order of `sweep.csv`.
pub const COLUMNS: [&str; 13] = [
    "omega",
    "theta",
    "Es",
    "phi_plus",
    "phi_minus",
    "pA_plus",
    "pA_minus",
    "PA_total",
    "PB_plus",
    "PB_minus",
    "PB_total",
    "residual",
    "model",
];

pub fn run_sweep(config: &RunConfig, inject_violation: f64) -> Result<Vec<ProtocolResult>, CliError> {
    let preps = prepare_settings(config, inject_violation)?;
    Ok(preps.iter().flat_map(|p| config.theta_list.iter().map(|&t| p.measure(MeasurementAxis::new(t)))).collect())
}

pub fn cmd_sweep(config: &RunConfig, inject_violation: f64) -> Result<CommandOutcome, CliError> {
    let rows = run_sweep(config, inject_violation)?;
    let path = config.output_dir.join("sweep.csv");
    let mut out = csv::Writer::from_path(&path)?;
    for row in &rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| CliError::io(&path, e))?;
    log::info!("sweep: {} rows written to {}", rows.len(), path.display());
    Ok(CommandOutcome { passed: true, files: vec![path] })
}
