//! `estimate`: the two-beam sampling experiment for each Alice setting.

use std::io::Write;

use nosig_core::estimation::{derive_seed, two_beam_experiment, TwoBeamEstimate};
use nosig_core::postselect::fold_phase;
use nosig_core::protocol::{Model, PreparedSetting};
use nosig_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{prepare_settings, CommandOutcome, ESTIMATE_STREAM};

pub const MIN_SAMPLES: u64 = 1000;

/// Exact values of what the experiment estimates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Truth {
    #[serde(rename = "Es_plus")]
    pub es_plus: f64,
    #[serde(rename = "Es_minus")]
    pub es_minus: f64,
    /// Folded to `[0, π]`, the range the estimator reports.
    pub phi_plus: Option<f64>,
    pub phi_minus: Option<f64>,
    pub visibility: f64,
    /// `V (cos φ₊ + cos φ₋)`: what the bound's point estimate targets.
    pub cos_sum: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateLine {
    pub index: usize,
    pub omega: f64,
    pub seed: u64,
    pub model: Model,
    pub truth: Truth,
    /// `ok`, or `phase_unidentifiable` when a beam has `Es` estimated at 0 or 1.
    pub status: &'static str,
    pub experiment: Option<TwoBeamEstimate>,
}

fn truth(prep: &PreparedSetting) -> Truth {
    let [plus, minus] = &prep.case_a;
    let cos = |b: &nosig_core::protocol::Branch| {
        let rho = &b.measured;
        let pops = rho.up_up() * rho.down_down();
        if pops > 0.0 {
            rho.coherence().norm() / pops.sqrt() * b.post.phase.map_or(0.0, f64::cos)
        } else {
            0.0
        }
    };
    Truth {
        es_plus: plus.post.es_eff,
        es_minus: minus.post.es_eff,
        phi_plus: plus.post.phase.map(fold_phase),
        phi_minus: minus.post.phase.map(fold_phase),
        visibility: plus.post.visibility,
        cos_sum: cos(plus) + cos(minus),
    }
}

pub fn run_estimate(config: &RunConfig, inject_violation: f64) -> Result<Vec<EstimateLine>, CliError> {
    if config.samples < MIN_SAMPLES {
        return Err(CliError::Config(format!("estimate needs samples >= {MIN_SAMPLES}, got {}", config.samples)));
    }
    let preps = prepare_settings(config, inject_violation)?;
    let stream = derive_seed(config.root_seed, ESTIMATE_STREAM);
    preps
        .par_iter()
        .enumerate()
        .map(|(index, prep)| {
            let seed = derive_seed(stream, index as u64);
            let [plus, minus] = &prep.case_a;
            let (status, experiment) = match two_beam_experiment(&plus.measured, &minus.measured, config.samples, seed)
            {
                Ok(exp) => ("ok", Some(exp)),
                Err(Error::PhaseUnidentifiable(_)) => ("phase_unidentifiable", None),
                Err(e) => return Err(e.into()),
            };
            Ok(EstimateLine {
                index,
                omega: prep.omega.angle(),
                seed,
                model: config.model,
                truth: truth(prep),
                status,
                experiment,
            })
        })
        .collect()
}

pub fn cmd_estimate(config: &RunConfig, inject_violation: f64) -> Result<CommandOutcome, CliError> {
    let lines = run_estimate(config, inject_violation)?;
    let path = config.output_dir.join("estimates.jsonl");
    let mut text = Vec::new();
    for line in &lines {
        serde_json::to_writer(&mut text, line)?;
        text.push(b'\n');
    }
    std::fs::File::create(&path).and_then(|mut f| f.write_all(&text)).map_err(|e| CliError::io(&path, e))?;
    let passed = lines.iter().filter_map(|l| l.experiment.as_ref()).all(|e| e.bound.consistent);
    for l in &lines {
        if let Some(e) = &l.experiment {
            log::info!(
                "omega = {:.4}: cos-sum {:+.5} in [{:+.5}, {:+.5}]",
                l.omega,
                e.bound.point,
                e.bound.ci.lo,
                e.bound.ci.hi
            );
        } else {
            log::warn!("omega = {:.4}: phase unidentifiable", l.omega);
        }
    }
    Ok(CommandOutcome { passed, files: vec![path] })
}
