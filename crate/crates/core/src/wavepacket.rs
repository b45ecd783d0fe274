//! Spatial dynamics of a spin-1/2 particle in a non-ideal Stern-Gerlach magnet.
//!
//! The magnet is treated impulsively: the packet position is frozen during the
//! transit while each spin channel picks up a momentum kick `±μ b τ` and a
//! Larmor phase `±μ B₀ τ`. After the magnet both channels are free Gaussians.
//! Only the `z` marginal is modelled; units have `ħ = 1`.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::spin::SpinState;

/// Default tolerance for saturation detection of `E(t)`.
pub const DEFAULT_SATURATION_TOL: f64 = 1e-6;

// Amplitude of a Gaussian falls to exp(-L²/4) at L widths from its center.
const SUPPORT_WIDTHS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgConfig {
    /// Particle mass.
    pub mass: f64,
    /// Initial (minimum-uncertainty) packet width.
    pub sigma0: f64,
    /// Magnetic moment `μ`.
    pub moment: f64,
    /// Field gradient `∂B/∂z`.
    pub gradient: f64,
    /// Uniform bias field `B₀`.
    pub bias: f64,
    /// Time spent inside the magnet.
    pub transit: f64,
}

impl SgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad("mass must be positive and finite");
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return bad("sigma0 must be positive and finite");
        }
        if !(self.transit >= 0.0 && self.transit.is_finite()) {
            return bad("transit must be non-negative and finite");
        }
        if !(self.gradient.is_finite() && self.bias.is_finite() && self.moment.is_finite()) {
            return bad("gradient, bias and moment must be finite");
        }
        Ok(())
    }

    /// Momentum kick `Δp = μ b τ` given to the spin-up channel.
    pub fn kick(&self) -> f64 {
        self.moment * self.gradient * self.transit
    }

    /// Larmor phase `μ B₀ τ` acquired by the spin-up channel.
    pub fn larmor_phase(&self) -> f64 {
        self.moment * self.bias * self.transit
    }

    /// `2 m σ₀²`: the time over which a packet doubles its width squared.
    pub fn spreading_time(&self) -> f64 {
        2.0 * self.mass * self.sigma0 * self.sigma0
    }

    /// Limit of `E(t)` for `t → ∞`: the normal tail beyond drift/spreading
    /// velocity ratio `2 σ₀ Δp`.
    pub fn saturated_es_closed_form(&self) -> f64 {
        0.5 * erfc(SQRT_2 * self.sigma0 * self.kick())
    }

    /// Ratio of transit time to spreading time; small values mean the
    /// impulsive model is trustworthy.
    pub fn impulsive_ratio(&self) -> f64 {
        self.transit / self.spreading_time()
    }

    /// Drift of a channel during the transit, in units of `sigma0`.
    pub fn transit_drift(&self) -> f64 {
        (self.kick() * self.transit / (2.0 * self.mass)).abs() / self.sigma0
    }
}

/// Interval of the `z` axis used for post-selection and partial norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
}

impl Region {
    pub fn upper() -> Self {
        Region { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn lower() -> Self {
        Region { lo: f64::NEG_INFINITY, hi: 0.0 }
    }

    pub fn full() -> Self {
        Region { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    /// Finite detection window `[0, z_max]` in the upper half.
    pub fn upper_window(z_max: f64) -> Self {
        Region { lo: 0.0, hi: z_max }
    }
}

/// Probability mass of a standard normal between `a` and `b`, accurate in
/// both tails.
pub(crate) fn normal_mass(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let upper_tail = |x: f64| {
        if x == f64::INFINITY {
            0.0
        } else if x == f64::NEG_INFINITY {
            1.0
        } else {
            0.5 * erfc(x / SQRT_2)
        }
    };
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b <= 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(-a) - upper_tail(b)
    }
}

/// Gaussian packet for one spin channel.
///
/// The normalized spatial shape is
/// `(2πσ₀²)^{-1/4} (1+is)^{-1/2} exp(-(z-c)²/(4σ₀²(1+is)) + ip(z-c) + iφ)`,
/// where `s` is the elapsed free time in units of the spreading time. The
/// channel amplitude is `weight` times that shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub center: f64,
    pub momentum: f64,
    /// Minimum width `σ₀`.
    pub waist: f64,
    /// Dimensionless spreading parameter `s = t / (2 m σ₀²)`.
    pub spread: f64,
    pub phase: f64,
    pub weight: Complex64,
}

impl GaussianComponent {
    /// Current width `σ(t) = σ₀ √(1 + s²)`.
    pub fn width(&self) -> f64 {
        self.waist * (1.0 + self.spread * self.spread).sqrt()
    }

    fn alpha(&self) -> Complex64 {
        1.0 / (4.0 * self.waist * self.waist * Complex64::new(1.0, self.spread))
    }

    fn prefactor(&self) -> Complex64 {
        let norm = (2.0 * PI * self.waist * self.waist).powf(-0.25);
        Complex64::from_polar(norm, self.phase) / Complex64::new(1.0, self.spread).sqrt()
    }

    /// Unit-normalized spatial amplitude, without `weight`.
    pub fn shape(&self, z: f64) -> Complex64 {
        let d = z - self.center;
        self.prefactor() * (-self.alpha() * d * d + Complex64::new(0.0, self.momentum * d)).exp()
    }

    /// Full channel amplitude `weight · shape(z)`.
    pub fn amplitude(&self, z: f64) -> Complex64 {
        self.weight * self.shape(z)
    }

    /// Normalized position density of the shape.
    pub fn shape_density(&self, z: f64) -> f64 {
        let w = self.width();
        let u = (z - self.center) / w;
        (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * w)
    }

    /// `∫_region |shape|² dz`.
    pub fn mass_in(&self, region: Region) -> f64 {
        let w = self.width();
        normal_mass((region.lo - self.center) / w, (region.hi - self.center) / w)
    }

    fn support(&self) -> (f64, f64) {
        let half = SUPPORT_WIDTHS * self.width();
        (self.center - half, self.center + half)
    }

    /// Free evolution for time `t` with mass `m`.
    pub fn propagated(&self, t: f64, mass: f64) -> GaussianComponent {
        let v = self.momentum / mass;
        GaussianComponent {
            center: self.center + v * t,
            spread: self.spread + t / (2.0 * mass * self.waist * self.waist),
            phase: self.phase + self.momentum * self.momentum * t / (2.0 * mass),
            ..*self
        }
    }
}

/// `∫ a(z) b*(z) dz` over the whole line for two normalized shapes.
pub fn shape_overlap(a: &GaussianComponent, b: &GaussianComponent) -> Complex64 {
    let i = Complex64::i();
    let (aa, ab) = (a.alpha(), b.alpha().conj());
    let quad = aa + ab;
    let lin = 2.0 * aa * a.center + 2.0 * ab * b.center + i * (a.momentum - b.momentum);
    let cst =
        -aa * a.center * a.center - ab * b.center * b.center - i * a.momentum * a.center + i * b.momentum * b.center;
    let gauss = (Complex64::new(PI, 0.0) / quad).sqrt() * (lin * lin / (4.0 * quad) + cst).exp();
    a.prefactor() * b.prefactor().conj() * gauss
}

/// Spin-up (`plus`) and spin-down (`minus`) channels after the magnet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePacketPair {
    pub plus: GaussianComponent,
    pub minus: GaussianComponent,
    pub mass: f64,
    /// Time elapsed since magnet exit.
    pub time: f64,
}

impl WavePacketPair {
    /// `|w₊|²·‖ψ₊‖² + |w₋|²·‖ψ₋‖²`; shapes are normalized so this is the weight norm.
    pub fn norm(&self) -> f64 {
        self.plus.weight.norm_sqr() + self.minus.weight.norm_sqr()
    }
}

/// Impulsive passage through the magnet.
pub fn evolve_through_magnet(config: &SgConfig, input: &SpinState) -> WavePacketPair {
    let kick = config.kick();
    let larmor = config.larmor_phase();
    let packet = |momentum: f64, phase: f64, weight: Complex64| GaussianComponent {
        center: 0.0,
        momentum,
        waist: config.sigma0,
        spread: 0.0,
        phase,
        weight,
    };
    WavePacketPair {
        plus: packet(kick, larmor, input.amp_up()),
        minus: packet(-kick, -larmor, input.amp_down()),
        mass: config.mass,
        time: 0.0,
    }
}

pub fn free_propagate(pair: &WavePacketPair, t: f64) -> Result<WavePacketPair> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(WavePacketPair {
        plus: pair.plus.propagated(t, pair.mass),
        minus: pair.minus.propagated(t, pair.mass),
        mass: pair.mass,
        time: pair.time + t,
    })
}

/// `E(t) = ∫₀^∞ |ψ₋|² dz` for the normalized spin-down shape.
pub fn error_fraction(pair: &WavePacketPair) -> f64 {
    pair.minus.mass_in(Region::upper())
}

/// The equivalent definition `∫_{-∞}^0 |ψ₊|² dz`.
pub fn error_fraction_lower(pair: &WavePacketPair) -> f64 {
    pair.plus.mass_in(Region::lower())
}

/// Spin-down mass inside a post-selection window.
pub fn error_fraction_in(pair: &WavePacketPair, region: Region) -> f64 {
    pair.minus.mass_in(region)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    /// Saturated value, `E(2·t_sat)`.
    pub es: f64,
    /// First time `t` with `|E(2t) - E(t)| < tol`.
    pub t_sat: f64,
    pub e_at_t_sat: f64,
}

impl Saturation {
    /// Time at which `es` was evaluated.
    pub fn settled_time(&self) -> f64 {
        2.0 * self.t_sat
    }
}

/// Time-steps `E(t)` on a doubling schedule starting at the spreading time
/// until two consecutive samples differ by less than `tol`.
pub fn saturated_es(config: &SgConfig, input: &SpinState, tol: f64, horizon: f64) -> Result<Saturation> {
    config.validate()?;
    if !(tol > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidConfig("saturation tol and horizon must be positive".into()));
    }
    let exit = evolve_through_magnet(config, input);
    let e_at = |t: f64| -> Result<f64> { Ok(error_fraction(&free_propagate(&exit, t)?)) };
    let mut t = config.spreading_time().min(horizon / 2.0);
    let mut e_t = e_at(t)?;
    loop {
        let e_2t = e_at(2.0 * t)?;
        if (e_2t - e_t).abs() < tol {
            return Ok(Saturation { es: e_2t, t_sat: t, e_at_t_sat: e_t });
        }
        if 4.0 * t > horizon {
            return Err(Error::NotSaturated { horizon, time: 2.0 * t, last_e: e_2t });
        }
        t *= 2.0;
        e_t = e_2t;
    }
}

/// `∫_region ψ₊(z) ψ₋*(z) dz` over the normalized shapes (weights excluded).
pub fn half_plane_coherence(pair: &WavePacketPair, region: Region) -> Result<Complex64> {
    let (p, m) = (&pair.plus, &pair.minus);
    let (p_lo, p_hi) = p.support();
    let (m_lo, m_hi) = m.support();
    let lo = p_lo.max(m_lo).max(region.lo);
    let hi = p_hi.min(m_hi).min(region.hi);
    if !(hi > lo) {
        return Ok(Complex64::new(0.0, 0.0));
    }

    // Initial mesh resolves both the envelope and the relative oscillation.
    let envelope = p.width().min(m.width());
    let wavenumber = (p.momentum - m.momentum).abs().max(1e-300);
    let step = envelope.min(2.0 * PI / wavenumber);
    let pieces = ((hi - lo) / step).ceil().clamp(1.0, 2000.0) as usize;
    let breakpoints: Vec<f64> =
        (0..=pieces).map(|k| if k == pieces { hi } else { lo + (hi - lo) * k as f64 / pieces as f64 }).collect();

    let tol = Tolerance { abs: 1e-14, rel: 1e-12, max_intervals: 20_000 };
    let integral = quadrature::integrate(|z| p.shape(z) * m.shape(z).conj(), &breakpoints, tol)?;
    Ok(integral.value)
}
