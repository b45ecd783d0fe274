//! `oracle`: the Gaussian model against the split-operator grid on the same
//! configuration.

use nosig_core::grid::{GridSolver, GridSpec};
use nosig_core::postselect::circular_offset;
use nosig_core::spin::{sigma_eigenstate, MeasurementAxis, Outcome};
use nosig_core::wavepacket::{
    error_fraction, evolve_through_magnet, free_propagate, half_plane_coherence, saturated_es, Region,
};
use nosig_core::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{write_json, CommandOutcome};

/// Below this coherence modulus the phase comparison is skipped.
const PHASE_FLOOR: f64 = 1e-6;

/// Momentum content kept on the grid: kick plus this many momentum widths.
const MOMENTUM_WIDTHS: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub extent: f64,
    pub points: usize,
    pub dt: f64,
    pub spacing: f64,
    /// Nyquist wavenumber of the grid and the largest one the packet needs.
    pub k_max: f64,
    pub k_needed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OraclePoint {
    pub t: f64,
    pub e_analytic: f64,
    pub e_grid: f64,
    pub e_diff: f64,
    /// `[re, im]` of the upper-half overlap of the normalized channels.
    pub coherence_analytic: [f64; 2],
    pub coherence_grid: [f64; 2],
    pub modulus_diff: f64,
    pub phase_diff: Option<f64>,
    pub density_l1: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub regime: &'static str,
    pub impulsive_ratio: f64,
    pub transit_drift: f64,
    pub input_angle: f64,
    pub t_sat: f64,
    pub grid: GridSummary,
    pub points: Vec<OraclePoint>,
    pub max_e_diff: f64,
    pub max_modulus_diff: f64,
    pub max_phase_diff: f64,
    pub max_density_l1: f64,
    pub note: Option<String>,
    pub pass: bool,
}

fn comparison_times(config: &RunConfig, t_sat: f64) -> Vec<f64> {
    let o = &config.oracle;
    if !o.times.is_empty() {
        let mut times = o.times.clone();
        times.sort_by(f64::total_cmp);
        return times;
    }
    let (lo, hi) = (0.25 * config.sg.spreading_time(), 2.0 * t_sat);
    (0..10).map(|k| lo * (hi / lo).powf(k as f64 / 9.0)).collect()
}

pub fn run_oracle(config: &RunConfig) -> Result<OracleReport, CliError> {
    let sg = &config.sg;
    let o = &config.oracle;
    let input = sigma_eigenstate(MeasurementAxis::new(o.input_angle), Outcome::Plus);
    let sat = saturated_es(sg, &input, o.saturation_tol, config.saturation.horizon)?;
    let times = comparison_times(config, sat.t_sat);
    let t_max = *times.last().expect("at least one time");

    let spec = GridSpec::covering(sg, t_max, o.points, o.sigmas);
    let k_max = std::f64::consts::PI / spec.spacing();
    let k_needed = sg.kick().abs() + MOMENTUM_WIDTHS / (2.0 * sg.sigma0);
    if k_max < k_needed {
        let need = (o.points as f64 * k_needed / k_max).ceil() as usize;
        return Err(CliError::GridResolution(format!(
            "grid wavenumber {k_max:.3} cannot hold the packet's momentum band up to {k_needed:.3}; \
             raise oracle.points to at least {} or shorten oracle.times",
            need.next_power_of_two()
        )));
    }

    let mut solver = GridSolver::new(sg, &input, spec).map_err(grid_advice)?;
    let exit = evolve_through_magnet(sg, &input);
    let mut points = Vec::with_capacity(times.len());
    for &t in &times {
        solver.advance_to(t).map_err(grid_advice)?;
        let snap = solver.snapshot();
        let pair = free_propagate(&exit, t)?;
        let e_analytic = error_fraction(&pair);
        let e_grid = snap.error_fraction(Region::upper());
        let k_model = half_plane_coherence(&pair, Region::upper())?;
        let k_grid = snap.coherence(Region::upper(), pair.plus.weight, pair.minus.weight);
        let modulus_diff = (k_model.norm() - k_grid.norm()).abs();
        let phase_diff = (k_model.norm() > PHASE_FLOOR).then(|| circular_offset(k_grid.arg() - k_model.arg()).abs());
        let e_diff = (e_analytic - e_grid).abs();
        points.push(OraclePoint {
            t,
            e_analytic,
            e_grid,
            e_diff,
            coherence_analytic: [k_model.re, k_model.im],
            coherence_grid: [k_grid.re, k_grid.im],
            modulus_diff,
            phase_diff,
            density_l1: snap.density_l1(&pair),
            pass: e_diff <= o.e_tol && modulus_diff <= o.modulus_tol && phase_diff.is_none_or(|d| d <= o.phase_tol),
        });
    }

    let impulsive = sg.impulsive_ratio() <= o.impulsive_limit;
    let pass = points.iter().all(|p| p.pass);
    let note = match (impulsive, pass) {
        (true, true) => None,
        (true, false) => Some("impulsive regime but the grid disagrees with the Gaussian model".to_owned()),
        (false, true) => Some("outside the impulsive regime; agreement is not guaranteed here".to_owned()),
        (false, false) => Some(format!(
            "outside the impulsive regime (transit/spreading = {:.3}): the model freezes the packet during \
             transit and is not expected to match the grid",
            sg.impulsive_ratio()
        )),
    };
    if let Some(n) = &note {
        log::warn!("{n}");
    }
    let fold = |f: fn(&OraclePoint) -> f64| points.iter().map(f).fold(0.0, f64::max);
    Ok(OracleReport {
        regime: if impulsive { "impulsive" } else { "non-impulsive" },
        impulsive_ratio: sg.impulsive_ratio(),
        transit_drift: sg.transit_drift(),
        input_angle: o.input_angle,
        t_sat: sat.t_sat,
        grid: GridSummary {
            extent: spec.extent,
            points: spec.points,
            dt: spec.dt,
            spacing: spec.spacing(),
            k_max,
            k_needed,
        },
        max_e_diff: fold(|p| p.e_diff),
        max_modulus_diff: fold(|p| p.modulus_diff),
        max_phase_diff: fold(|p| p.phase_diff.unwrap_or(0.0)),
        max_density_l1: fold(|p| p.density_l1),
        points,
        note,
        pass,
    })
}

fn grid_advice(e: Error) -> CliError {
    match e {
        Error::BoundaryLeak { mass, time } => CliError::GridResolution(format!(
            "mass {mass:e} reached the grid edge at t = {time}; raise oracle.sigmas or oracle.points"
        )),
        Error::InvalidGrid(msg) => CliError::GridResolution(msg),
        other => other.into(),
    }
}

pub fn cmd_oracle(config: &RunConfig) -> Result<CommandOutcome, CliError> {
    let report = run_oracle(config)?;
    let path = write_json(&config.output_dir, "oracle.json", &report)?;
    log::info!(
        "oracle ({}): max |ΔE| = {:e}, max |Δ|K|| = {:e}, max Δarg K = {:e}",
        report.regime,
        report.max_e_diff,
        report.max_modulus_diff,
        report.max_phase_diff
    );
    Ok(CommandOutcome { passed: report.pass, files: vec![path] })
}
