//! Half-plane post-selection and the relative phase of the surviving spin state.
//!
//! Particles outside the selection region are absorbed. Tracing out position
//! over the region leaves the (generally mixed) spin density matrix
//!
//! ```text
//! ρ↑↑ ∝ |w₊|² ∫|ψ₊|²,   ρ↓↓ ∝ |w₋|² ∫|ψ₋|²,   ρ↑↓ ∝ w₊ w₋* ∫ψ₊ψ₋*
//! ```
//!
//! normalized by the selection probability. The pure-state ansatz
//! `√(1-Es)|↑⟩ + e^{iφ}√Es|↓⟩` is available through [`chi_state`].

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{SpinDensityMatrix, SpinState};
use crate::wavepacket::{half_plane_coherence, Region, WavePacketPair};

const MIN_SELECTION: f64 = 1e-12;

/// Spin state of the particles that survive post-selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostSelectedSpin {
    pub select_prob: f64,
    pub rho: SpinDensityMatrix,
    /// `ρ↓↓`.
    pub es_eff: f64,
    /// Relative phase `arg ⟨↓|ρ|↑⟩` in `[0, 2π)`, absent when the coherence
    /// is below tolerance.
    pub phase: Option<f64>,
    /// `|ρ↑↓| / √(ρ↑↑ ρ↓↓)`; taken as 1 when a population vanishes.
    pub visibility: f64,
}

/// Post-selection onto the upper half-plane `z > 0`.
pub fn project_upper(pair: &WavePacketPair) -> Result<PostSelectedSpin> {
    project(pair, Region::upper())
}

pub fn project(pair: &WavePacketPair, region: Region) -> Result<PostSelectedSpin> {
    let spreading_time = 2.0 * pair.mass * pair.plus.waist * pair.plus.waist;
    if pair.time < spreading_time {
        log::warn!(
            "post-selecting at t = {} before the packets have spread (t_spread = {}); E(t) is not saturated",
            pair.time,
            spreading_time
        );
    }
    let (wp, wm) = (pair.plus.weight, pair.minus.weight);
    let up = wp.norm_sqr() * pair.plus.mass_in(region);
    let down = wm.norm_sqr() * pair.minus.mass_in(region);
    let select_prob = up + down;
    if !(select_prob >= MIN_SELECTION) {
        return Err(Error::EmptySelection(select_prob));
    }
    let cross = if wp.norm() == 0.0 || wm.norm() == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        wp * wm.conj() * half_plane_coherence(pair, region)?
    };
    let m = [
        [Complex64::new(up / select_prob, 0.0), cross / select_prob],
        [cross.conj() / select_prob, Complex64::new(down / select_prob, 0.0)],
    ];
    let rho = SpinDensityMatrix::from_entries(m)?;
    Ok(describe(rho, select_prob))
}

/// Populations, phase and visibility of an already-selected state.
pub fn describe(rho: SpinDensityMatrix, select_prob: f64) -> PostSelectedSpin {
    let pops = rho.up_up() * rho.down_down();
    let visibility = if pops > 0.0 { rho.coherence().norm() / pops.sqrt() } else { 1.0 };
    PostSelectedSpin {
        select_prob,
        rho,
        es_eff: rho.down_down(),
        phase: extract_phase(&rho, default_phase_tol(&rho)).ok(),
        visibility,
    }
}

/// `√(1-Es)|↑⟩ + e^{iφ}√Es|↓⟩`.
pub fn chi_state(es: f64, phase: f64) -> Result<SpinState> {
    if !(0.0..=1.0).contains(&es) {
        return Err(Error::ProbabilityOutOfRange { name: "Es", value: es });
    }
    SpinState::new(Complex64::new((1.0 - es).sqrt(), 0.0), Complex64::from_polar(es.sqrt(), phase))
}

/// `1e-10 · √(ρ↑↑ρ↓↓)`, floored at `1e-14`.
pub fn default_phase_tol(rho: &SpinDensityMatrix) -> f64 {
    let pops = (rho.up_up() * rho.down_down()).max(0.0);
    (1e-10 * pops.sqrt()).max(1e-14)
}

/// Relative phase `φ` of `a|↑⟩ + e^{iφ} b|↓⟩`, i.e. `arg ⟨↓|ρ|↑⟩`, mapped
/// to `[0, 2π)`. This matches the convention of [`chi_state`].
pub fn extract_phase(rho: &SpinDensityMatrix, tol: f64) -> Result<f64> {
    let c = rho.entry(1, 0);
    if !(c.norm() >= tol) {
        return Err(Error::PhaseUndefined { coherence: c.norm(), tol });
    }
    Ok(wrap_phase(c.arg()))
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed distance of `phi` from zero on the circle, in `(-π, π]`.
pub fn circular_offset(phi: f64) -> f64 {
    let w = wrap_phase(phi);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// `cos φ₊ + cos φ₋`; zero exactly when `φ₊ ± φ₋ = π (mod 2π)` for one sign.
pub fn constraint_residual(phi_plus: f64, phi_minus: f64) -> f64 {
    phi_plus.cos() + phi_minus.cos()
}

/// Distance (mod 2π) of the closer of `φ₊ + φ₋` and `φ₊ - φ₋` from `π`.
pub fn constraint_phase_gap(phi_plus: f64, phi_minus: f64) -> f64 {
    let sum = circular_offset(phi_plus + phi_minus - PI).abs();
    let diff = circular_offset(phi_plus - phi_minus - PI).abs();
    sum.min(diff)
}

/// Representative of `φ` in `[0, π]` with the same cosine.
pub fn fold_phase(phi: f64) -> f64 {
    circular_offset(phi).abs()
}

/// Serializable summary of a [`PostSelectedSpin`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSelectionSummary {
    pub select_prob: f64,
    pub es_eff: f64,
    pub phase: Option<f64>,
    pub visibility: f64,
}

impl From<&PostSelectedSpin> for PostSelectionSummary {
    fn from(p: &PostSelectedSpin) -> Self {
        PostSelectionSummary { select_prob: p.select_prob, es_eff: p.es_eff, phase: p.phase, visibility: p.visibility }
    }
}
