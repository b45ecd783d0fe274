//! Two-level spin algebra restricted to measurement axes in the x-z plane.
//!
//! Basis ordering is `[up_z, down_z]`. An axis at angle `θ` from `+z` towards
//! `+x` carries the observable `σ_θ = cos θ σ_z + sin θ σ_x`.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for algebraic identities on spin objects.
pub const ALGEBRA_TOL: f64 = 1e-12;

const MIN_NORM_SQR: f64 = 1e-30;

/// Measurement direction in the x-z plane, angle from `+z` normalized to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct MeasurementAxis(f64);

impl MeasurementAxis {
    pub const Z: MeasurementAxis = MeasurementAxis(0.0);
    pub const X: MeasurementAxis = MeasurementAxis(std::f64::consts::FRAC_PI_2);

    /// Panics on non-finite input; use `try_from` for fallible construction.
    pub fn new(angle: f64) -> Self {
        Self::try_from(angle).expect("axis angle must be finite")
    }

    pub fn angle(self) -> f64 {
        self.0
    }

    /// `(cos θ, sin θ)`.
    pub fn direction(self) -> (f64, f64) {
        (self.0.cos(), self.0.sin())
    }
}

impl TryFrom<f64> for MeasurementAxis {
    type Error = String;

    fn try_from(angle: f64) -> std::result::Result<Self, String> {
        if !angle.is_finite() {
            return Err(format!("axis angle {angle} is not finite"));
        }
        let mut a = angle.rem_euclid(TAU);
        if a >= TAU {
            a = 0.0;
        }
        Ok(MeasurementAxis(a))
    }
}

impl From<MeasurementAxis> for f64 {
    fn from(axis: MeasurementAxis) -> f64 {
        axis.0
    }
}

/// Eigenvalue of a `σ_θ` measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+1",
            Outcome::Minus => "-1",
        })
    }
}

/// Normalized pure spin state in canonical global phase.
///
/// When `|up| > 1e-12` the up amplitude is real and non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    up: Complex64,
    down: Complex64,
}

impl SpinState {
    pub fn new(up: Complex64, down: Complex64) -> Result<Self> {
        let norm_sqr = up.norm_sqr() + down.norm_sqr();
        if !(norm_sqr > MIN_NORM_SQR) || !norm_sqr.is_finite() {
            return Err(Error::ZeroSpinor { norm_sqr });
        }
        let norm = norm_sqr.sqrt();
        let (mut up, mut down) = (up / norm, down / norm);
        let up_mod = up.norm();
        if up_mod > ALGEBRA_TOL {
            let phase = up.conj() / up_mod;
            up = Complex64::new(up_mod, 0.0);
            down *= phase;
        }
        Ok(SpinState { up, down })
    }

    pub fn from_real(up: f64, down: f64) -> Result<Self> {
        Self::new(Complex64::new(up, 0.0), Complex64::new(down, 0.0))
    }

    pub fn up_z() -> Self {
        SpinState { up: Complex64::new(1.0, 0.0), down: Complex64::new(0.0, 0.0) }
    }

    pub fn down_z() -> Self {
        SpinState { up: Complex64::new(0.0, 0.0), down: Complex64::new(1.0, 0.0) }
    }

    pub fn amp_up(&self) -> Complex64 {
        self.up
    }

    pub fn amp_down(&self) -> Complex64 {
        self.down
    }

    pub fn inner(&self, other: &SpinState) -> Complex64 {
        self.up.conj() * other.up + self.down.conj() * other.down
    }

    /// `|⟨self|other⟩|²`, insensitive to global phase.
    pub fn fidelity(&self, other: &SpinState) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn projector(&self) -> SpinDensityMatrix {
        SpinDensityMatrix {
            m: [
                [self.up * self.up.conj(), self.up * self.down.conj()],
                [self.down * self.up.conj(), self.down * self.down.conj()],
            ],
        }
    }
}

/// Eigenstate of `σ_θ`; the `+1` state is `cos(θ/2)|↑⟩ + sin(θ/2)|↓⟩`.
pub fn sigma_eigenstate(axis: MeasurementAxis, outcome: Outcome) -> SpinState {
    let half = 0.5 * axis.angle();
    let (c, s) = (half.cos(), half.sin());
    let state = match outcome {
        Outcome::Plus => SpinState::from_real(c, s),
        Outcome::Minus => SpinState::from_real(-s, c),
    };
    state.expect("eigenstate has unit norm")
}

/// 2x2 spin density matrix, entries indexed `[row][col]` over `{up, down}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinDensityMatrix {
    m: [[Complex64; 2]; 2],
}

impl SpinDensityMatrix {
    /// Validates Hermiticity, unit trace and positivity within `1e-12`.
    pub fn from_entries(m: [[Complex64; 2]; 2]) -> Result<Self> {
        let rho = SpinDensityMatrix { m };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_entries_unchecked(m: [[Complex64; 2]; 2]) -> Self {
        SpinDensityMatrix { m }
    }

    pub fn maximally_mixed() -> Self {
        Self::diagonal(0.5)
    }

    /// `diag(1 - p_down, p_down)`.
    pub fn diagonal(p_down: f64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        SpinDensityMatrix { m: [[Complex64::new(1.0 - p_down, 0.0), zero], [zero, Complex64::new(p_down, 0.0)]] }
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.m[row][col]
    }

    pub fn up_up(&self) -> f64 {
        self.m[0][0].re
    }

    pub fn down_down(&self) -> f64 {
        self.m[1][1].re
    }

    /// `⟨↑|ρ|↓⟩`.
    pub fn coherence(&self) -> Complex64 {
        self.m[0][1]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0][0] + self.m[1][1]
    }

    /// Bloch vector components `(r_x, r_z)` in the x-z plane.
    pub fn bloch_xz(&self) -> (f64, f64) {
        (2.0 * self.m[0][1].re, self.m[0][0].re - self.m[1][1].re)
    }

    pub fn purity(&self) -> f64 {
        let mut p = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                p += (self.m[i][j] * self.m[j][i]).re;
            }
        }
        p
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = self.m[0][1].norm();
        0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b * b).sqrt()
    }

    pub fn max_abs_diff(&self, other: &SpinDensityMatrix) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let herm = (self.m[0][1] - self.m[1][0].conj()).norm() + self.m[0][0].im.abs() + self.m[1][1].im.abs();
        if !(herm <= ALGEBRA_TOL) {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = self.trace().re;
        if !((tr - 1.0).abs() <= ALGEBRA_TOL) {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let lam = self.min_eigenvalue();
        if lam < -ALGEBRA_TOL {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {lam:e}")));
        }
        Ok(())
    }
}

impl From<SpinState> for SpinDensityMatrix {
    fn from(state: SpinState) -> Self {
        state.projector()
    }
}

impl From<&SpinState> for SpinDensityMatrix {
    fn from(state: &SpinState) -> Self {
        state.projector()
    }
}

/// `ρ = Σ wᵢ |ψᵢ⟩⟨ψᵢ|`.
pub fn mixture(components: &[(f64, SpinState)]) -> Result<SpinDensityMatrix> {
    if components.is_empty() {
        return Err(Error::InvalidWeights("empty mixture".into()));
    }
    let mut total = 0.0;
    let zero = Complex64::new(0.0, 0.0);
    let mut m = [[zero; 2]; 2];
    for (w, state) in components {
        if !(*w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidWeights(format!("weight {w} is negative or not finite")));
        }
        total += w;
        let p = state.projector();
        for (row, prow) in m.iter_mut().zip(&p.m) {
            for (x, px) in row.iter_mut().zip(prow) {
                *x += px * *w;
            }
        }
    }
    if (total - 1.0).abs() > ALGEBRA_TOL {
        return Err(Error::InvalidWeights(format!("weights sum to {total}, expected 1")));
    }
    Ok(SpinDensityMatrix { m })
}

/// Born-rule probabilities for `σ_θ` measurements.
pub trait BornRule {
    fn born_probability(&self, axis: MeasurementAxis, outcome: Outcome) -> f64;
}

impl BornRule for SpinDensityMatrix {
    fn born_probability(&self, axis: MeasurementAxis, outcome: Outcome) -> f64 {
        let (rx, rz) = self.bloch_xz();
        let (c, s) = axis.direction();
        0.5 * (1.0 + outcome.sign() * (c * rz + s * rx))
    }
}

impl BornRule for SpinState {
    fn born_probability(&self, axis: MeasurementAxis, outcome: Outcome) -> f64 {
        self.projector().born_probability(axis, outcome)
    }
}

/// Bob's side of the singlet after Alice measures `σ_ω` and obtains `alice_outcome`.
///
/// Returns the outcome probability and Bob's conditional state, which is the
/// `σ_ω` eigenstate with the opposite eigenvalue.
pub fn singlet_conditional(alice_axis: MeasurementAxis, alice_outcome: Outcome) -> (f64, SpinState) {
    (0.5, sigma_eigenstate(alice_axis, alice_outcome.flipped()))
}

/// Bob's reduced state averaged over Alice's outcomes for setting `ω`.
pub fn singlet_marginal(alice_axis: MeasurementAxis) -> SpinDensityMatrix {
    let parts: Vec<(f64, SpinState)> = Outcome::BOTH.iter().map(|&o| singlet_conditional(alice_axis, o)).collect();
    mixture(&parts).expect("singlet conditionals form a valid mixture")
}
