//! Outcome probabilities for Bob's post-selected `σ_θ` measurement under two
//! choices of Alice's setting, and the end-to-end EPR-Bohm pipeline.
//!
//! Case A: Alice measures `σ_ω`, Bob's particle enters the magnet as `|↗⟩ω`
//! or `|↙⟩ω` with probability 1/2 each. Case B: Alice measures `σ_z`, Bob's
//! particle enters as `|↑⟩` or `|↓⟩`. No-signalling demands that the total
//! probability of "post-selected and `σ_θ = +1`" is the same in both cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postselect::{chi_state, constraint_phase_gap, describe, project, wrap_phase, PostSelectedSpin};
use crate::spin::{
    sigma_eigenstate, singlet_conditional, BornRule, MeasurementAxis, Outcome, SpinDensityMatrix, SpinState,
};
use crate::wavepacket::{
    error_fraction_in, evolve_through_magnet, free_propagate, saturated_es, Region, SgConfig, DEFAULT_SATURATION_TOL,
};

const PROB_SLACK: f64 = 1e-12;

/// How the post-selected spin state is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Pure ansatz `√(1-Es)|↑⟩ + e^{iφ}√Es|↓⟩` with populations and phase
    /// taken from the projection.
    Pure,
    /// Full projected density matrix, visibility possibly below one.
    Projected,
}

fn check_es(es: f64) -> Result<()> {
    if (0.0..=1.0).contains(&es) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange { name: "Es", value: es })
    }
}

fn assert_probability(name: &str, p: f64) -> f64 {
    assert!((-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p), "{name} = {p} is not a probability");
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    /// Alice's setting.
    pub omega: MeasurementAxis,
    /// Bob's final measurement.
    pub theta: MeasurementAxis,
    pub es: f64,
    /// Relative phase of the post-selected state for input `|↗⟩ω`.
    pub phi_plus: f64,
    /// Relative phase for input `|↙⟩ω`.
    pub phi_minus: f64,
    /// Coherence factor of the post-selected state; 1 for the pure ansatz.
    pub visibility: f64,
}

impl ProtocolConfig {
    pub fn new(omega: f64, theta: f64, es: f64, phi_plus: f64, phi_minus: f64) -> Result<Self> {
        check_es(es)?;
        Ok(ProtocolConfig {
            omega: MeasurementAxis::new(omega),
            theta: MeasurementAxis::new(theta),
            es,
            phi_plus,
            phi_minus,
            visibility: 1.0,
        })
    }

    pub fn with_visibility(mut self, visibility: f64) -> Self {
        self.visibility = visibility;
        self
    }

    fn coherence_amplitude(&self) -> f64 {
        self.visibility * (self.es * (1.0 - self.es)).sqrt()
    }
}

/// Probability of `σ_θ = +1` on `√(1-Es)|↑⟩ + e^{iφ}√Es|↓⟩`.
pub fn p_single_branch(es: f64, theta: f64, phi: f64) -> Result<f64> {
    check_es(es)?;
    let p = 0.5 * (1.0 + (1.0 - 2.0 * es) * theta.cos() + 2.0 * (es * (1.0 - es)).sqrt() * theta.sin() * phi.cos());
    Ok(assert_probability("p_single", p))
}

/// Joint probability that Alice's outcome sends Bob `bob_input` (`|↗⟩ω` for
/// `Plus`), the particle is post-selected, and `σ_θ` gives `+1`.
///
/// Built from the branch selection probability
/// `cos²(ω/2)(1-Es) + sin²(ω/2)Es` (roles swapped for `Minus`); at `ω = π/2`
/// this is `(1/2)·(1/2)·p_single`.
pub fn pa_branch(es: f64, theta: f64, phi: f64, omega: MeasurementAxis, bob_input: Outcome) -> Result<f64> {
    check_es(es)?;
    Ok(branch_joint(es, theta, phi, omega.angle(), bob_input, 1.0))
}

fn branch_joint(es: f64, theta: f64, phi: f64, omega: f64, bob_input: Outcome, visibility: f64) -> f64 {
    let (c2, s2) = ((0.5 * omega).cos().powi(2), (0.5 * omega).sin().powi(2));
    let (up_weight, down_weight) = match bob_input {
        Outcome::Plus => (c2, s2),
        Outcome::Minus => (s2, c2),
    };
    let up = up_weight * (1.0 - es);
    let down = down_weight * es;
    let cross = visibility * omega.sin() * (es * (1.0 - es)).sqrt() * theta.sin() * phi.cos();
    0.25 * (up + down + (up - down) * theta.cos() + cross)
}

/// Total probability with Alice measuring `σ_ω`:
/// `(1/4)[1 + (1-2Es)cosθ + V√(Es(1-Es)) sinω sinθ (cosφ₊ + cosφ₋)]`.
pub fn pa_total(cfg: &ProtocolConfig) -> f64 {
    let (th, om) = (cfg.theta.angle(), cfg.omega.angle());
    let p = 0.25
        * (1.0
            + (1.0 - 2.0 * cfg.es) * th.cos()
            + cfg.coherence_amplitude() * om.sin() * th.sin() * (cfg.phi_plus.cos() + cfg.phi_minus.cos()));
    assert_probability("PA_total", p)
}

/// Alice measuring `σ_x`: `(1/4)[1 + (1-2Es)cosθ + √(Es(1-Es)) sinθ (cosφ₊ + cosφ₋)]`.
pub fn pa_x_total(es: f64, theta: f64, phi_plus: f64, phi_minus: f64) -> Result<f64> {
    check_es(es)?;
    let p = 0.25
        * (1.0
            + (1.0 - 2.0 * es) * theta.cos()
            + (es * (1.0 - es)).sqrt() * theta.sin() * (phi_plus.cos() + phi_minus.cos()));
    Ok(assert_probability("PA_x", p))
}

/// `(1/4)(1 + cosθ)(1 - Es)`: Bob receives `|↑⟩`.
pub fn pb_plus(es: f64, theta: f64) -> Result<f64> {
    check_es(es)?;
    Ok(0.25 * (1.0 + theta.cos()) * (1.0 - es))
}

/// `(1/4)(1 - cosθ)Es`: Bob receives `|↓⟩`.
pub fn pb_minus(es: f64, theta: f64) -> Result<f64> {
    check_es(es)?;
    Ok(0.25 * (1.0 - theta.cos()) * es)
}

/// `(1/4)[1 + (1-2Es)cosθ]`.
pub fn pb_total(es: f64, theta: f64) -> Result<f64> {
    check_es(es)?;
    Ok(assert_probability("PB_total", 0.25 * (1.0 + (1.0 - 2.0 * es) * theta.cos())))
}

/// `PA_total - PB_total = (1/4)V√(Es(1-Es)) sinω sinθ (cosφ₊ + cosφ₋)`.
pub fn nsc_residual(cfg: &ProtocolConfig) -> f64 {
    let (th, om) = (cfg.theta.angle(), cfg.omega.angle());
    0.25 * cfg.coherence_amplitude() * om.sin() * th.sin() * (cfg.phi_plus.cos() + cfg.phi_minus.cos())
}

/// Closed-form probabilities for one configuration.
pub fn evaluate(cfg: &ProtocolConfig) -> Result<ProtocolResult> {
    check_es(cfg.es)?;
    let (es, th, om) = (cfg.es, cfg.theta.angle(), cfg.omega.angle());
    let pa_plus = branch_joint(es, th, cfg.phi_plus, om, Outcome::Plus, cfg.visibility);
    let pa_minus = branch_joint(es, th, cfg.phi_minus, om, Outcome::Minus, cfg.visibility);
    let pa = pa_total(cfg);
    let (pbp, pbm) = (pb_plus(es, th)?, pb_minus(es, th)?);
    let pb = pb_total(es, th)?;
    Ok(ProtocolResult {
        omega: om,
        theta: th,
        es,
        phi_plus: Some(cfg.phi_plus),
        phi_minus: Some(cfg.phi_minus),
        pa_plus: assert_probability("pA_plus", pa_plus),
        pa_minus: assert_probability("pA_minus", pa_minus),
        pa_total: pa,
        pb_plus: pbp,
        pb_minus: pbm,
        pb_total: pb,
        residual: nsc_residual(cfg),
        model: Model::Pure,
    })
}

/// Flat record of one protocol evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub omega: f64,
    pub theta: f64,
    #[serde(rename = "Es")]
    pub es: f64,
    pub phi_plus: Option<f64>,
    pub phi_minus: Option<f64>,
    #[serde(rename = "pA_plus")]
    pub pa_plus: f64,
    #[serde(rename = "pA_minus")]
    pub pa_minus: f64,
    #[serde(rename = "PA_total")]
    pub pa_total: f64,
    #[serde(rename = "PB_plus")]
    pub pb_plus: f64,
    #[serde(rename = "PB_minus")]
    pub pb_minus: f64,
    #[serde(rename = "PB_total")]
    pub pb_total: f64,
    pub residual: f64,
    pub model: Model,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub model: Model,
    pub saturation_tol: f64,
    pub horizon: f64,
    pub region: Region,
    /// Debug knob: added to `cos φ₋` of the Case A `|↙⟩ω` branch.
    pub inject_violation: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            model: Model::Projected,
            saturation_tol: DEFAULT_SATURATION_TOL,
            horizon: 1e12,
            region: Region::upper(),
            inject_violation: 0.0,
        }
    }
}

/// One of Alice's outcomes and what happens to Bob's particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub alice_prob: f64,
    pub bob_input: SpinState,
    pub post: PostSelectedSpin,
    /// State on which `σ_θ` is measured (depends on the model).
    pub measured: SpinDensityMatrix,
}

impl Branch {
    /// Probability of this branch, post-selection, and `σ_θ = +1`.
    pub fn joint_plus(&self, theta: MeasurementAxis) -> f64 {
        self.alice_prob * self.post.select_prob * self.measured.born_probability(theta, Outcome::Plus)
    }
}

/// Everything about one Alice setting that does not depend on `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSetting {
    pub omega: MeasurementAxis,
    pub es: f64,
    pub t_sat: f64,
    pub model: Model,
    /// `[|↗⟩ω, |↙⟩ω]` branches of Case A.
    pub case_a: [Branch; 2],
    /// `[|↑⟩, |↓⟩]` branches of Case B.
    pub case_b: [Branch; 2],
}

impl PreparedSetting {
    pub fn phases(&self) -> (Option<f64>, Option<f64>) {
        (self.case_a[0].post.phase, self.case_a[1].post.phase)
    }

    pub fn phase_gap(&self) -> Option<f64> {
        match self.phases() {
            (Some(a), Some(b)) => Some(constraint_phase_gap(a, b)),
            _ => None,
        }
    }

    pub fn visibility(&self) -> f64 {
        self.case_a[0].post.visibility
    }

    pub fn measure(&self, theta: MeasurementAxis) -> ProtocolResult {
        let pa_plus = self.case_a[0].joint_plus(theta);
        let pa_minus = self.case_a[1].joint_plus(theta);
        let pb_plus = self.case_b[0].joint_plus(theta);
        let pb_minus = self.case_b[1].joint_plus(theta);
        let (phi_plus, phi_minus) = self.phases();
        let pa_total = pa_plus + pa_minus;
        let pb_total = pb_plus + pb_minus;
        ProtocolResult {
            omega: self.omega.angle(),
            theta: theta.angle(),
            es: self.es,
            phi_plus,
            phi_minus,
            pa_plus: assert_probability("pA_plus", pa_plus),
            pa_minus: assert_probability("pA_minus", pa_minus),
            pa_total: assert_probability("PA_total", pa_total),
            pb_plus: assert_probability("PB_plus", pb_plus),
            pb_minus: assert_probability("PB_minus", pb_minus),
            pb_total: assert_probability("PB_total", pb_total),
            residual: pa_total - pb_total,
            model: self.model,
        }
    }
}

fn with_phase(rho: &SpinDensityMatrix, phi: f64) -> SpinDensityMatrix {
    let c = num_complex::Complex64::from_polar(rho.coherence().norm(), phi);
    SpinDensityMatrix::from_entries_unchecked([[rho.entry(0, 0), c.conj()], [c, rho.entry(1, 1)]])
}

fn corrupt_phase(phi: f64, delta: f64) -> f64 {
    let cos = (phi.cos() + delta).clamp(-1.0, 1.0);
    let sign = if phi.sin() < 0.0 { -1.0 } else { 1.0 };
    wrap_phase(sign * cos.acos())
}

/// Runs Bob's particle for each of Alice's outcomes under setting `ω`
/// (Case A) and under `σ_z` (Case B), through the magnet, to saturation, and
/// through post-selection.
pub fn prepare(sg: &SgConfig, omega: MeasurementAxis, opts: &PipelineOptions) -> Result<PreparedSetting> {
    sg.validate()?;
    let sat = saturated_es(sg, &SpinState::up_z(), opts.saturation_tol, opts.horizon)?;
    let settle = sat.settled_time();

    let branch = |alice_axis: MeasurementAxis, bob_outcome: Outcome, corrupt: f64| -> Result<Branch> {
        let (alice_prob, bob_input) = singlet_conditional(alice_axis, bob_outcome.flipped());
        debug_assert!(bob_input.fidelity(&sigma_eigenstate(alice_axis, bob_outcome)) > 1.0 - 1e-12);
        let pair = free_propagate(&evolve_through_magnet(sg, &bob_input), settle)?;
        let mut post = match project(&pair, opts.region) {
            Ok(post) => post,
            // the branch is never observed; its state only multiplies a negligible probability
            Err(Error::EmptySelection(p)) => {
                log::debug!("branch selected with probability {p:e}; using the input state");
                describe(SpinDensityMatrix::from(bob_input), p)
            }
            Err(e) => return Err(e),
        };
        let mut measured = match opts.model {
            Model::Projected => post.rho,
            Model::Pure => match post.phase {
                Some(phi) => chi_state(post.es_eff, phi)?.projector(),
                None if post.rho.up_up() * post.rho.down_down() <= 1e-24 => post.rho,
                None => {
                    return Err(Error::PhaseUndefined { coherence: post.rho.coherence().norm(), tol: 0.0 });
                }
            },
        };
        if corrupt != 0.0 {
            if let Some(phi) = post.phase {
                let bent = corrupt_phase(phi, corrupt);
                measured = with_phase(&measured, bent);
                post = describe(with_phase(&post.rho, bent), post.select_prob);
            }
        }
        Ok(Branch { alice_prob, bob_input, post, measured })
    };

    let case_a = [branch(omega, Outcome::Plus, 0.0)?, branch(omega, Outcome::Minus, opts.inject_violation)?];
    let case_b = [branch(MeasurementAxis::Z, Outcome::Plus, 0.0)?, branch(MeasurementAxis::Z, Outcome::Minus, 0.0)?];
    for b in &case_b {
        // z-basis inputs stay diagonal: no relative phase exists
        assert!(b.post.phase.is_none(), "Case B branch acquired a phase");
    }

    let reference = free_propagate(&evolve_through_magnet(sg, &SpinState::up_z()), settle)?;
    Ok(PreparedSetting {
        omega,
        es: error_fraction_in(&reference, opts.region),
        t_sat: sat.t_sat,
        model: opts.model,
        case_a,
        case_b,
    })
}

pub fn run_pipeline(
    sg: &SgConfig,
    omega: MeasurementAxis,
    theta: MeasurementAxis,
    opts: &PipelineOptions,
) -> Result<ProtocolResult> {
    Ok(prepare(sg, omega, opts)?.measure(theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postselect::fold_phase;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn sg() -> SgConfig {
        SgConfig { mass: 1.0, sigma0: 1.0, moment: 1.0, gradient: 500.0, bias: 600.0, transit: 1e-3 }
    }

    #[test]
    fn single_branch_examples() {
        for &es in &[0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(p_single_branch(es, 0.0, 1.7).unwrap(), 1.0 - es, epsilon = 1e-15);
        }
        for &th in &[0.3, 1.4, 2.9] {
            assert_abs_diff_eq!(p_single_branch(0.0, th, 0.4).unwrap(), 0.5 * (1.0 + th.cos()), epsilon = 1e-15);
        }
        // √(0.1·0.9) = 0.3 → (1/2)(1 + 0.6)
        assert_abs_diff_eq!(p_single_branch(0.1, FRAC_PI_2, 0.0).unwrap(), 0.8, epsilon = 1e-15);
        assert!(p_single_branch(1.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn branch_examples() {
        let x = MeasurementAxis::X;
        assert_abs_diff_eq!(pa_branch(0.0, 0.0, 0.0, x, Outcome::Plus).unwrap(), 0.25, epsilon = 1e-15);
        for &(es, th, phi) in &[(0.1, 0.7, 0.2), (0.4, 2.0, 2.5), (0.02, 3.0, 5.0)] {
            let b = pa_branch(es, th, phi, x, Outcome::Plus).unwrap();
            assert_abs_diff_eq!(b, 0.25 * p_single_branch(es, th, phi).unwrap(), epsilon = 1e-15);
            let eq5 =
                0.125 * (1.0 + (1.0 - 2.0 * es) * th.cos() + 2.0 * (es * (1.0 - es)).sqrt() * th.sin() * phi.cos());
            assert_abs_diff_eq!(b, eq5, epsilon = 1e-15);
        }
    }

    #[test]
    fn branches_sum_to_total_on_grid() {
        for i in 0..=10 {
            for j in 0..=12 {
                for k in 0..=6 {
                    let (es, th, phi_p) = (i as f64 * 0.1, j as f64 * PI / 12.0, k as f64 * 0.9);
                    let phi_m = 2.0 - phi_p;
                    let x = MeasurementAxis::X;
                    let sum = pa_branch(es, th, phi_p, x, Outcome::Plus).unwrap()
                        + pa_branch(es, th, phi_m, x, Outcome::Minus).unwrap();
                    assert_abs_diff_eq!(sum, pa_x_total(es, th, phi_p, phi_m).unwrap(), epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn total_examples() {
        let cfg = ProtocolConfig::new(FRAC_PI_2, FRAC_PI_2, 0.2, FRAC_PI_2, FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(pa_total(&cfg), 0.25, epsilon = 1e-15);

        let cfg = ProtocolConfig::new(FRAC_PI_2, FRAC_PI_3, 0.2, 0.0, 0.0).unwrap();
        let direct = 0.25 * (1.0 + 0.6 * 0.5 + 0.4 * (3f64.sqrt() / 2.0) * 2.0);
        assert_abs_diff_eq!(pa_total(&cfg), direct, epsilon = 1e-15);
        assert_abs_diff_eq!(pa_total(&cfg), 0.498_205, epsilon = 1e-6);

        for &(om, th, es, phi) in &[(0.3, 1.0, 0.1, 0.4), (2.0, 2.5, 0.45, 1.9), (1.0, 0.2, 0.02, 3.0)] {
            let cfg = ProtocolConfig::new(om, th, es, phi, PI - phi).unwrap();
            assert_abs_diff_eq!(pa_total(&cfg), pb_total(es, th).unwrap(), epsilon = 1e-15);
        }
    }

    #[test]
    fn pb_examples() {
        for &es in &[0.0, 0.2, 0.7] {
            assert_abs_diff_eq!(pb_total(es, FRAC_PI_2).unwrap(), 0.25, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(pb_total(0.0, 0.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pb_total(0.3, FRAC_PI_3).unwrap(), 0.3, epsilon = 1e-15);
        let (es, th) = (0.37, 1.2);
        assert_abs_diff_eq!(
            pb_plus(es, th).unwrap() + pb_minus(es, th).unwrap(),
            pb_total(es, th).unwrap(),
            epsilon = 1e-15
        );
        assert!(pb_total(-0.1, 0.0).is_err());
    }

    #[test]
    fn residual_examples() {
        for &(phi_p, phi_m) in &[(0.0, 0.0), (1.0, 2.0), (3.0, 0.1)] {
            let cfg = ProtocolConfig::new(1.1, 0.9, 0.0, phi_p, phi_m).unwrap();
            assert_eq!(nsc_residual(&cfg), 0.0);
            let cfg = ProtocolConfig::new(1.1, 0.0, 0.3, phi_p, phi_m).unwrap();
            assert_eq!(nsc_residual(&cfg), 0.0);
        }
        let cfg = ProtocolConfig::new(FRAC_PI_2, FRAC_PI_2, 0.25, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(nsc_residual(&cfg), 0.25 * 0.1875_f64.sqrt() * 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nsc_residual(&cfg), 0.216_51, epsilon = 1e-5);
    }

    #[test]
    fn evaluate_is_consistent() {
        let cfg = ProtocolConfig::new(0.8, 1.3, 0.17, 0.6, 2.2).unwrap().with_visibility(0.7);
        let r = evaluate(&cfg).unwrap();
        assert_abs_diff_eq!(r.pa_plus + r.pa_minus, r.pa_total, epsilon = 1e-15);
        assert_abs_diff_eq!(r.pb_plus + r.pb_minus, r.pb_total, epsilon = 1e-15);
        assert_abs_diff_eq!(r.pa_total - r.pb_total, r.residual, epsilon = 1e-15);
    }

    #[test]
    fn json_keys() {
        let cfg = ProtocolConfig::new(0.8, 1.3, 0.17, 0.6, 2.2).unwrap();
        let text = serde_json::to_string(&evaluate(&cfg).unwrap()).unwrap();
        for key in ["\"Es\"", "\"pA_plus\"", "\"PA_total\"", "\"PB_minus\"", "\"model\":\"pure\""] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
    }

    #[test]
    fn pipeline_ideal_limit() {
        let ideal = SgConfig { gradient: 5e3, ..sg() };
        let opts = PipelineOptions::default();
        let prep = prepare(&ideal, MeasurementAxis::new(1.0), &opts).unwrap();
        assert!(prep.es < 1e-6);
        for j in 0..13 {
            let r = prep.measure(MeasurementAxis::new(j as f64 * PI / 12.0));
            assert!(r.residual.abs() < 1e-8);
        }
    }

    #[test]
    fn pipeline_same_setting_gives_identical_cases() {
        for model in [Model::Pure, Model::Projected] {
            let opts = PipelineOptions { model, ..Default::default() };
            let prep = prepare(&sg(), MeasurementAxis::Z, &opts).unwrap();
            for j in 0..9 {
                let r = prep.measure(MeasurementAxis::new(j as f64 * 0.7));
                assert!(r.residual.abs() < 1e-15, "{}", r.residual);
            }
        }
    }

    #[test]
    fn pipeline_generic_sweep() {
        for model in [Model::Pure, Model::Projected] {
            let opts = PipelineOptions { model, ..Default::default() };
            let prep = prepare(&sg(), MeasurementAxis::X, &opts).unwrap();
            let mut worst = 0.0_f64;
            for j in 0..25 {
                let r = prep.measure(MeasurementAxis::new(j as f64 * PI / 24.0));
                worst = worst.max(r.residual.abs());
            }
            assert!(worst < 1e-9, "{model:?}: {worst:e}");
            let (a, b) = prep.phases();
            let (a, b) = (a.unwrap(), b.unwrap());
            assert!(prep.phase_gap().unwrap() < 1e-9);
            // in the cosine-only representation the sum branch holds literally
            assert!((fold_phase(a) + fold_phase(b) - PI).abs() < 1e-9);
        }
    }

    #[test]
    fn pipeline_matches_closed_form() {
        let omega = MeasurementAxis::new(0.7);
        for model in [Model::Pure, Model::Projected] {
            let opts = PipelineOptions { model, ..Default::default() };
            let prep = prepare(&sg(), omega, &opts).unwrap();
            let (a, b) = prep.phases();
            let vis = if model == Model::Pure { 1.0 } else { prep.visibility() };
            assert!(vis < 1.0 || model == Model::Pure);
            for j in 0..7 {
                let theta = MeasurementAxis::new(0.4 * j as f64);
                let cfg = ProtocolConfig {
                    omega,
                    theta,
                    es: prep.es,
                    phi_plus: a.unwrap(),
                    phi_minus: b.unwrap(),
                    visibility: vis,
                };
                let r = prep.measure(theta);
                assert_abs_diff_eq!(r.pa_total, pa_total(&cfg), epsilon = 1e-12);
                assert_abs_diff_eq!(r.pb_total, pb_total(prep.es, theta.angle()).unwrap(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn branch_selection_probabilities() {
        let omega = MeasurementAxis::new(1.1);
        let prep = prepare(&sg(), omega, &PipelineOptions::default()).unwrap();
        let (c2, s2) = ((0.55_f64).cos().powi(2), (0.55_f64).sin().powi(2));
        let es = prep.es;
        assert_abs_diff_eq!(prep.case_a[0].post.select_prob, c2 * (1.0 - es) + s2 * es, epsilon = 1e-12);
        assert_abs_diff_eq!(prep.case_a[1].post.select_prob, s2 * (1.0 - es) + c2 * es, epsilon = 1e-12);
        let mean = 0.5 * (prep.case_a[0].post.select_prob + prep.case_a[1].post.select_prob);
        assert_abs_diff_eq!(mean, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn injected_violation_breaks_equality() {
        let opts = PipelineOptions { inject_violation: 0.1, ..Default::default() };
        let prep = prepare(&sg(), MeasurementAxis::X, &opts).unwrap();
        let r = prep.measure(MeasurementAxis::X);
        assert!(r.residual.abs() > 1e-4);
        assert!(prep.phase_gap().unwrap() > 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn prop_bounds_and_sums(es in 0.0..=1.0f64, th in 0.0..6.3f64, om in 0.0..PI, pp in -7.0..7.0f64, pm in -7.0..7.0f64) {
            let cfg = ProtocolConfig::new(om, th, es, pp, pm).unwrap();
            let r = evaluate(&cfg).unwrap();
            prop_assert!((-1e-12..=0.5 + 1e-12).contains(&r.pa_total));
            prop_assert!((-1e-12..=0.5 + 1e-12).contains(&r.pb_total));
            prop_assert!((r.pa_plus + r.pa_minus - r.pa_total).abs() < 1e-12);
            prop_assert!((r.pb_plus + r.pb_minus - r.pb_total).abs() < 1e-12);
        }

        #[test]
        fn prop_x_setting_reduces(es in 0.0..=1.0f64, th in 0.0..6.3f64, pp in -7.0..7.0f64, pm in -7.0..7.0f64) {
            let cfg = ProtocolConfig::new(FRAC_PI_2, th, es, pp, pm).unwrap();
            prop_assert!((pa_total(&cfg) - pa_x_total(es, th, pp, pm).unwrap()).abs() < 1e-14);
            let eq12 = pa_x_total(es, th, pp, pm).unwrap() - pb_total(es, th).unwrap();
            prop_assert!((nsc_residual(&cfg) - eq12).abs() < 1e-14);
        }

        #[test]
        fn prop_residual_odd_under_reflection(es in 0.0..=1.0f64, th in 0.0..6.3f64, om in 0.0..6.3f64, pp in -7.0..7.0f64, pm in -7.0..7.0f64) {
            let a = nsc_residual(&ProtocolConfig::new(om, th, es, pp, pm).unwrap());
            let b = nsc_residual(&ProtocolConfig::new(om, th, es, PI - pp, PI - pm).unwrap());
            prop_assert!((a + b).abs() < 1e-12);
        }

        #[test]
        fn prop_constraint_zeroes_residual(es in 0.0..=1.0f64, th in 0.0..6.3f64, om in 0.0..6.3f64, pp in -7.0..7.0f64, minus_branch in proptest::bool::ANY) {
            let pm = if minus_branch { pp + PI } else { PI - pp };
            let cfg = ProtocolConfig::new(om, th, es, pp, pm).unwrap();
            prop_assert!(nsc_residual(&cfg).abs() < 1e-12);
        }
    }
}
