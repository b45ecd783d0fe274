//! `verify`: the no-signalling checks over the ω × θ grid.

use nosig_core::estimation::{derive_seed, sample_protocol};
use nosig_core::postselect::{circular_offset, fold_phase};
use nosig_core::protocol::{Model, PreparedSetting};
use nosig_core::spin::MeasurementAxis;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, Tolerances};
use crate::error::CliError;
use crate::{prepare_settings, write_json, CommandOutcome, VERIFY_STREAM};

#[derive(Debug, Clone, Serialize)]
pub struct SettingSummary {
    pub omega: f64,
    pub phi_plus: Option<f64>,
    pub phi_minus: Option<f64>,
    pub visibility: f64,
    /// Distance of the closer constraint branch `φ₊ ± φ₋ = π` (mod 2π).
    pub phase_gap: Option<f64>,
    /// `|φ₊ + φ₋ - π|` after folding both phases to `[0, π]`.
    pub folded_sum_gap: Option<f64>,
    pub case_b_phase_defined: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleCheck {
    pub pairs: u64,
    pub seed_omega: u64,
    pub seed_z: u64,
    pub freq_omega: f64,
    pub freq_z: f64,
    pub sigma: f64,
    pub z_score: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub omega: f64,
    pub theta: f64,
    #[serde(rename = "PA_total")]
    pub pa_total: f64,
    #[serde(rename = "PB_total")]
    pub pb_total: f64,
    pub residual: f64,
    pub sample: Option<SampleCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub model: Model,
    #[serde(rename = "Es")]
    pub es: f64,
    pub t_sat: f64,
    pub inject_violation: f64,
    pub tolerances: Tolerances,
    pub degenerate: bool,
    pub warnings: Vec<String>,
    pub max_abs_residual: f64,
    pub max_phase_gap: Option<f64>,
    pub max_folded_sum_gap: Option<f64>,
    pub max_abs_z_score: Option<f64>,
    pub settings: Vec<SettingSummary>,
    pub cells: Vec<Cell>,
    pub pass: bool,
}

fn summarize(prep: &PreparedSetting, tol: &Tolerances) -> SettingSummary {
    let (phi_plus, phi_minus) = prep.phases();
    let phase_gap = prep.phase_gap();
    let folded_sum_gap = match (phi_plus, phi_minus) {
        (Some(a), Some(b)) => Some(circular_offset(fold_phase(a) + fold_phase(b) - std::f64::consts::PI).abs()),
        _ => None,
    };
    let case_b_phase_defined = prep.case_b.iter().any(|b| b.post.phase.is_some());
    SettingSummary {
        omega: prep.omega.angle(),
        phi_plus,
        phi_minus,
        visibility: prep.visibility(),
        phase_gap,
        folded_sum_gap,
        case_b_phase_defined,
        pass: phase_gap.is_none_or(|g| g <= tol.phase),
    }
}

fn sample_check(
    prep: &PreparedSetting,
    theta: MeasurementAxis,
    n: u64,
    seed: u64,
    sigmas: f64,
) -> Result<SampleCheck, CliError> {
    let (seed_omega, seed_z) = (derive_seed(seed, 0), derive_seed(seed, 1));
    let a = sample_protocol(&prep.case_a, theta, n, seed_omega)?;
    let b = sample_protocol(&prep.case_b, theta, n, seed_z)?;
    let (fa, fb) = (a.frequency(), b.frequency());
    let pooled = 0.5 * (fa + fb);
    let sigma = (2.0 * pooled * (1.0 - pooled) / n as f64).sqrt();
    let diff = fa - fb;
    let z_score = if sigma > 0.0 {
        diff / sigma
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(SampleCheck {
        pairs: n,
        seed_omega,
        seed_z,
        freq_omega: fa,
        freq_z: fb,
        sigma,
        z_score,
        pass: z_score.abs() <= sigmas,
    })
}

/// Runs every check without touching the file system.
pub fn run_verify(config: &RunConfig, inject_violation: f64) -> Result<VerifyReport, CliError> {
    let tol = config.tolerances;
    let preps = prepare_settings(config, inject_violation)?;
    let es = preps[0].es;

    let mut warnings = Vec::new();
    let degenerate = config.sg.kick() == 0.0 || es >= 0.5 - 1e-12;
    if degenerate {
        warnings.push(format!(
            "degenerate Stern-Gerlach setting: channels do not separate (Es = {es}); Case B phases are unidentifiable"
        ));
    } else if es < 1e-12 {
        warnings.push(format!("ideal Stern-Gerlach limit: Es = {es:e}, relative phases carry no weight"));
    }
    if inject_violation != 0.0 {
        warnings.push(format!("phase corruption injected: cos φ₋ shifted by {inject_violation}"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let settings: Vec<SettingSummary> = preps.iter().map(|p| summarize(p, &tol)).collect();
    let stream = derive_seed(config.root_seed, VERIFY_STREAM);
    let n_theta = config.theta_list.len();
    let grid: Vec<(usize, usize)> = (0..preps.len()).flat_map(|i| (0..n_theta).map(move |j| (i, j))).collect();
    let cells = grid
        .par_iter()
        .map(|&(i, j)| -> Result<Cell, CliError> {
            let theta = MeasurementAxis::new(config.theta_list[j]);
            let r = preps[i].measure(theta);
            let sample = if config.samples > 0 {
                let seed = derive_seed(stream, (i * n_theta + j) as u64);
                Some(sample_check(&preps[i], theta, config.samples, seed, tol.sigmas)?)
            } else {
                None
            };
            let pass = r.residual.abs() <= tol.residual && sample.is_none_or(|s| s.pass);
            Ok(Cell {
                omega: r.omega,
                theta: r.theta,
                pa_total: r.pa_total,
                pb_total: r.pb_total,
                residual: r.residual,
                sample,
                pass,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let max_of = |it: &mut dyn Iterator<Item = f64>| it.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let pass = cells.iter().all(|c| c.pass) && settings.iter().all(|s| s.pass);
    Ok(VerifyReport {
        model: config.model,
        es,
        t_sat: preps[0].t_sat,
        inject_violation,
        tolerances: tol,
        degenerate,
        max_abs_residual: cells.iter().map(|c| c.residual.abs()).fold(0.0, f64::max),
        max_phase_gap: max_of(&mut settings.iter().filter_map(|s| s.phase_gap)),
        max_folded_sum_gap: max_of(&mut settings.iter().filter_map(|s| s.folded_sum_gap)),
        max_abs_z_score: max_of(&mut cells.iter().filter_map(|c| c.sample.map(|s| s.z_score.abs()))),
        warnings,
        settings,
        cells,
        pass,
    })
}

pub fn cmd_verify(config: &RunConfig, inject_violation: f64) -> Result<CommandOutcome, CliError> {
    let report = run_verify(config, inject_violation)?;
    let path = write_json(&config.output_dir, "report.json", &report)?;
    log::info!(
        "verify: max |residual| = {:e}, max phase gap = {:?}, pass = {}",
        report.max_abs_residual,
        report.max_phase_gap,
        report.pass
    );
    Ok(CommandOutcome { passed: report.pass, files: vec![path] })
}
