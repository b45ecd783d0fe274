//! Finite-sample Born-rule sampling and the two-axis estimation procedure:
//! `Es` from `σ_z` counts on post-selected particles, `cos φ` from `σ_x`
//! counts, Wilson intervals, and a bound on `cos φ₊ + cos φ₋`.
//!
//! Seeds: every stream is a `ChaCha8Rng` seeded with a 64-bit value.
//! Independent streams come from [`derive_seed`], which mixes a parent seed
//! and a stream index through the splitmix64 finalizer. Results therefore
//! never depend on which thread drew them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::Branch;
use crate::spin::{BornRule, MeasurementAxis, Outcome};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `parent`: `mix64(parent + (index + 1)·γ)`
/// with γ the 64-bit golden-ratio increment.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(parent.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if n == 0 {
        return 0;
    }
    let p = p.clamp(0.0, 1.0);
    Binomial::new(n, p).expect("p clamped to [0, 1]").sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl std::ops::Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::new(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64, z: f64) -> Interval {
    assert!(n > 0 && k <= n);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    Interval::new(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub axis: MeasurementAxis,
    pub n_plus: u64,
    pub n_minus: u64,
    pub seed: u64,
    pub true_state_id: String,
}

impl MeasurementRecord {
    pub fn total(&self) -> u64 {
        self.n_plus + self.n_minus
    }

    pub fn frequency_plus(&self) -> f64 {
        self.n_plus as f64 / self.total() as f64
    }
}

/// Draws `n` independent `σ_axis` outcomes on `state`.
pub fn sample<S: BornRule + ?Sized>(
    state: &S,
    axis: MeasurementAxis,
    n: u64,
    seed: u64,
    true_state_id: &str,
) -> Result<MeasurementRecord> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_plus = binomial(n, state.born_probability(axis, Outcome::Plus), &mut rng);
    Ok(MeasurementRecord { axis, n_plus, n_minus: n - n_plus, seed, true_state_id: true_state_id.to_owned() })
}

fn require_axis(record: &MeasurementRecord, expected: MeasurementAxis) -> Result<()> {
    let d = (record.axis.angle() - expected.angle()).abs();
    if d.min(std::f64::consts::TAU - d) > 1e-12 {
        return Err(Error::WrongAxis { expected: expected.angle(), found: record.axis.angle() });
    }
    if record.total() == 0 {
        return Err(Error::EmptySample);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsEstimate {
    #[serde(rename = "Es_hat")]
    pub es_hat: f64,
    pub ci: Interval,
}

/// `Es` as the fraction of `σ_z = -1` outcomes, with its 95% Wilson interval.
pub fn estimate_es(record_z: &MeasurementRecord) -> Result<EsEstimate> {
    require_axis(record_z, MeasurementAxis::Z)?;
    Ok(EsEstimate {
        es_hat: record_z.n_minus as f64 / record_z.total() as f64,
        ci: wilson(record_z.n_minus, record_z.total(), Z95),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    #[serde(rename = "Es_hat")]
    pub es_hat: f64,
    /// In `[0, π]`: the counts fix `cos φ` only.
    pub phi_hat: f64,
    #[serde(rename = "ci_Es")]
    pub ci_es: Interval,
    pub ci_phi: Interval,
    /// Interval on `cos φ`, already clamped to `[-1, 1]`.
    pub ci_cos: Interval,
    pub clamped: bool,
}

/// Inverts `P(σ_x = +1) = 1/2 + √(Es(1-Es)) cos φ`.
///
/// The interval on `cos φ` propagates the Wilson widths of the `σ_x`
/// frequency and of `Es` to first order, then maps through `arccos`.
pub fn estimate_phase(record_x: &MeasurementRecord, es: &EsEstimate) -> Result<PhaseEstimate> {
    require_axis(record_x, MeasurementAxis::X)?;
    let e = es.es_hat;
    let g2 = e * (1.0 - e);
    if g2 <= 0.0 {
        return Err(Error::PhaseUnidentifiable(e));
    }
    let g = g2.sqrt();
    let n = record_x.total();
    let f = record_x.frequency_plus();
    let c_raw = (f - 0.5) / g;
    let clamped = c_raw.abs() > 1.0;
    let c = c_raw.clamp(-1.0, 1.0);

    let se_f = wilson(record_x.n_plus, n, Z95).width() / (2.0 * Z95);
    let se_e = es.ci.width() / (2.0 * Z95);
    let de = c_raw * (1.0 - 2.0 * e) / (2.0 * g2);
    let se_c = ((se_f / g).powi(2) + (de * se_e).powi(2)).sqrt();
    let ci_cos = Interval::new((c_raw - Z95 * se_c).clamp(-1.0, 1.0), (c_raw + Z95 * se_c).clamp(-1.0, 1.0));
    Ok(PhaseEstimate {
        es_hat: e,
        phi_hat: c.acos(),
        ci_es: es.ci,
        ci_phi: Interval::new(ci_cos.hi.acos(), ci_cos.lo.acos()),
        ci_cos,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NscBound {
    pub point: f64,
    pub ci: Interval,
    pub consistent: bool,
}

/// `cos φ̂₊ + cos φ̂₋` with the sum of the two cosine intervals.
pub fn nsc_violation_bound(plus: &PhaseEstimate, minus: &PhaseEstimate) -> NscBound {
    let point = plus.phi_hat.cos() + minus.phi_hat.cos();
    let cos_of = |p: &PhaseEstimate| Interval::new(p.ci_phi.hi.cos(), p.ci_phi.lo.cos());
    let ci = cos_of(plus) + cos_of(minus);
    NscBound { point, ci, consistent: ci.contains(0.0) }
}

/// One beam of the two-axis procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamEstimate {
    pub record_z: MeasurementRecord,
    pub record_x: MeasurementRecord,
    pub estimate: PhaseEstimate,
}

/// Samples `n` particles on each of `σ_z` and `σ_x` and estimates `Es`, `φ`.
pub fn estimate_beam<S: BornRule + ?Sized>(state: &S, n: u64, seed: u64, id: &str) -> Result<BeamEstimate> {
    let record_z = sample(state, MeasurementAxis::Z, n, derive_seed(seed, 0), id)?;
    let record_x = sample(state, MeasurementAxis::X, n, derive_seed(seed, 1), id)?;
    let es = estimate_es(&record_z)?;
    let estimate = estimate_phase(&record_x, &es)?;
    Ok(BeamEstimate { record_z, record_x, estimate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBeamEstimate {
    pub plus: BeamEstimate,
    pub minus: BeamEstimate,
    pub bound: NscBound,
}

/// The `|↗⟩ω` beam followed by the `|↙⟩ω` beam, on independent streams.
pub fn two_beam_experiment<S: BornRule + ?Sized>(plus: &S, minus: &S, n: u64, seed: u64) -> Result<TwoBeamEstimate> {
    let plus = estimate_beam(plus, n, derive_seed(seed, 0), "plus")?;
    let minus = estimate_beam(minus, n, derive_seed(seed, 1), "minus")?;
    let bound = nsc_violation_bound(&plus.estimate, &minus.estimate);
    Ok(TwoBeamEstimate { plus, minus, bound })
}

/// Pooled counts for one Alice setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolCounts {
    pub pairs: u64,
    pub selected: u64,
    pub plus: u64,
}

impl ProtocolCounts {
    /// Estimate of the joint probability "selected and `σ_θ = +1`".
    pub fn frequency(&self) -> f64 {
        self.plus as f64 / self.pairs as f64
    }
}

/// Simulates `n` pairs event by event at the level of counts: Alice's
/// outcome, then post-selection of Bob's particle, then Bob's `σ_θ`.
pub fn sample_protocol(branches: &[Branch; 2], theta: MeasurementAxis, n: u64, seed: u64) -> Result<ProtocolCounts> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = binomial(n, branches[0].alice_prob, &mut rng);
    let mut counts = ProtocolCounts { pairs: n, selected: 0, plus: 0 };
    for (branch, arrivals) in branches.iter().zip([first, n - first]) {
        let selected = binomial(arrivals, branch.post.select_prob, &mut rng);
        counts.selected += selected;
        counts.plus += binomial(selected, branch.measured.born_probability(theta, Outcome::Plus), &mut rng);
    }
    Ok(counts)
}
