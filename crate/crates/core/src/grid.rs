//! Split-operator solver for the two-component 1-D Pauli equation.
//!
//! Used as an independent check on the analytic Gaussian model: inside the
//! magnet the spin-up channel feels `V₊(z) = -μ(B₀ + b z)` and the spin-down
//! channel `V₋ = -V₊`; afterwards both evolve freely. The channels never mix
//! because the field is along `z`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::spin::SpinState;
use crate::wavepacket::{GaussianComponent, Region, SgConfig, WavePacketPair};

/// Maximum norm held in the outer sixteenth of the grid on either side.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Total width; the grid covers `[-extent/2, extent/2)`.
    pub extent: f64,
    /// Number of samples, a power of two.
    pub points: usize,
    /// Time step used while a potential is present.
    pub dt: f64,
}

impl GridSpec {
    pub fn spacing(&self) -> f64 {
        self.extent / self.points as f64
    }

    /// Grid wide enough to hold both channels of `config` up to `t_max` after
    /// the magnet, with `sigmas` packet widths of margin plus the guard band.
    pub fn covering(config: &SgConfig, t_max: f64, points: usize, sigmas: f64) -> GridSpec {
        let s = t_max / config.spreading_time();
        let width = config.sigma0 * (1.0 + s * s).sqrt();
        let reach = (config.kick() / config.mass).abs() * (t_max + config.transit) + sigmas * width;
        // the outer 1/16 on each side is the leak-detection band
        let extent = 2.0 * reach * 8.0 / 7.0;
        let dt = if config.transit > 0.0 { config.transit / 64.0 } else { 1.0 };
        GridSpec { extent, points, dt }
    }

    fn validate(&self) -> Result<()> {
        if !self.points.is_power_of_two() || self.points < 16 {
            return Err(Error::InvalidGrid(format!("points = {} is not a power of two >= 16", self.points)));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidGrid(format!("extent = {} must be positive", self.extent)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidGrid(format!("dt = {} must be positive", self.dt)));
        }
        Ok(())
    }
}

/// Sampled channel amplitudes at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSnapshot {
    /// Time since magnet exit.
    pub time: f64,
    pub z: Vec<f64>,
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
}

impl GridSnapshot {
    fn spacing(&self) -> f64 {
        self.z[1] - self.z[0]
    }

    /// Trapezoid weights restricted to `region` (half weight on a boundary sample).
    fn weight(&self, z: f64, region: Region) -> f64 {
        let dz = self.spacing();
        if z < region.lo || z > region.hi {
            0.0
        } else if z == region.lo || z == region.hi {
            0.5 * dz
        } else {
            dz
        }
    }

    pub fn norm(&self) -> f64 {
        let dz = self.spacing();
        self.plus.iter().chain(&self.minus).map(|a| a.norm_sqr()).sum::<f64>() * dz
    }

    /// `∫_region |ψ₋|² dz / ∫ |ψ₋|² dz`.
    pub fn error_fraction(&self, region: Region) -> f64 {
        let total: f64 = self.minus.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.spacing();
        let part: f64 = self.z.iter().zip(&self.minus).map(|(&z, a)| self.weight(z, region) * a.norm_sqr()).sum();
        part / total
    }

    /// `∫_region ψ₊ ψ₋* dz` with both channels scaled to unit norm and the
    /// spin weights divided out.
    pub fn coherence(&self, region: Region, weight_plus: Complex64, weight_minus: Complex64) -> Complex64 {
        let sum: Complex64 = self
            .z
            .iter()
            .zip(self.plus.iter().zip(&self.minus))
            .map(|(&z, (p, m))| p * m.conj() * self.weight(z, region))
            .sum();
        sum / (weight_plus * weight_minus.conj())
    }

    /// `∫ | |ψ_grid|² - |ψ_model|² | dz` summed over both channels.
    pub fn density_l1(&self, pair: &WavePacketPair) -> f64 {
        let dz = self.spacing();
        self.z
            .iter()
            .zip(self.plus.iter().zip(&self.minus))
            .map(|(&z, (p, m))| {
                (p.norm_sqr() - pair.plus.amplitude(z).norm_sqr()).abs()
                    + (m.norm_sqr() - pair.minus.amplitude(z).norm_sqr()).abs()
            })
            .sum::<f64>()
            * dz
    }

    /// Writes `z, Re ψ₊, Im ψ₊, Re ψ₋, Im ψ₋` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "z,re_plus,im_plus,re_minus,im_minus")?;
        for ((z, p), m) in self.z.iter().zip(&self.plus).zip(&self.minus) {
            writeln!(out, "{z},{},{},{},{}", p.re, p.im, m.re, m.im)?;
        }
        Ok(())
    }
}

pub struct GridSolver {
    config: SgConfig,
    spec: GridSpec,
    z: Vec<f64>,
    k: Vec<f64>,
    plus: Vec<Complex64>,
    minus: Vec<Complex64>,
    /// Time since magnet exit.
    time: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    steps: usize,
}

impl GridSolver {
    /// Samples the initial packet and runs the magnet transit.
    pub fn new(config: &SgConfig, input: &SpinState, spec: GridSpec) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let n = spec.points;
        let dz = spec.spacing();
        let z: Vec<f64> = (0..n).map(|j| -0.5 * spec.extent + j as f64 * dz).collect();
        let dk = 2.0 * PI / spec.extent;
        let k: Vec<f64> = (0..n).map(|j| if j < n / 2 { j as f64 * dk } else { (j as f64 - n as f64) * dk }).collect();

        let initial = GaussianComponent {
            center: 0.0,
            momentum: 0.0,
            waist: config.sigma0,
            spread: 0.0,
            phase: 0.0,
            weight: Complex64::new(1.0, 0.0),
        };
        let plus = z.iter().map(|&x| input.amp_up() * initial.shape(x)).collect();
        let minus = z.iter().map(|&x| input.amp_down() * initial.shape(x)).collect();

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len()];
        let mut solver = GridSolver {
            config: *config,
            spec,
            z,
            k,
            plus,
            minus,
            time: -config.transit,
            forward,
            inverse,
            scratch,
            steps: 0,
        };
        solver.check_boundary()?;
        solver.run_transit()?;
        Ok(solver)
    }

    /// Time since magnet exit.
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Number of split-operator steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn norm(&self) -> f64 {
        let dz = self.spec.spacing();
        self.plus.iter().chain(&self.minus).map(|a| a.norm_sqr()).sum::<f64>() * dz
    }

    fn run_transit(&mut self) -> Result<()> {
        let transit = self.config.transit;
        if transit == 0.0 {
            self.time = 0.0;
            return Ok(());
        }
        let n_steps = (transit / self.spec.dt).ceil().max(1.0) as usize;
        let dt = transit / n_steps as f64;
        let mu = self.config.moment;
        let (b0, grad) = (self.config.bias, self.config.gradient);
        // e^{-i V₊ dt/2} with V₊ = -μ(B₀ + b z); the down channel takes the conjugate
        let half_kick: Vec<Complex64> =
            self.z.iter().map(|&z| Complex64::from_polar(1.0, 0.5 * mu * (b0 + grad * z) * dt)).collect();
        let kinetic = self.kinetic_phase(dt);
        for _ in 0..n_steps {
            for (psi, v) in [(&mut self.plus, false), (&mut self.minus, true)] {
                apply_potential(psi, &half_kick, v);
                kinetic_step(psi, &kinetic, &self.forward, &self.inverse, &mut self.scratch);
                apply_potential(psi, &half_kick, v);
            }
            self.steps += 1;
        }
        self.time = 0.0;
        self.check_boundary()
    }

    fn kinetic_phase(&self, dt: f64) -> Vec<Complex64> {
        let m = self.config.mass;
        let n = self.spec.points as f64;
        self.k.iter().map(|&k| Complex64::from_polar(1.0 / n, -k * k * dt / (2.0 * m))).collect()
    }

    /// Free evolution to `t` (since magnet exit). With no potential the
    /// kinetic propagator is exact, so a single step covers the interval.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.time {
            return Err(Error::NegativeTime(t - self.time));
        }
        let dt = t - self.time;
        if dt > 0.0 {
            let kinetic = self.kinetic_phase(dt);
            for psi in [&mut self.plus, &mut self.minus] {
                kinetic_step(psi, &kinetic, &self.forward, &self.inverse, &mut self.scratch);
            }
            self.steps += 1;
            self.time = t;
        }
        self.check_boundary()
    }

    /// `⟨p⟩` of one channel (`true` for spin up), normalized by the channel norm.
    pub fn mean_momentum(&mut self, up: bool) -> f64 {
        let mut buf = if up { self.plus.clone() } else { self.minus.clone() };
        self.forward.process_with_scratch(&mut buf, &mut self.scratch);
        let (mut num, mut den) = (0.0, 0.0);
        for (a, k) in buf.iter().zip(&self.k) {
            num += k * a.norm_sqr();
            den += a.norm_sqr();
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn snapshot(&self) -> GridSnapshot {
        GridSnapshot { time: self.time, z: self.z.clone(), plus: self.plus.clone(), minus: self.minus.clone() }
    }

    fn check_boundary(&self) -> Result<()> {
        let n = self.spec.points;
        let band = n / 16;
        let dz = self.spec.spacing();
        let edge = |psi: &[Complex64]| -> f64 {
            psi[..band].iter().chain(&psi[n - band..]).map(|a| a.norm_sqr()).sum::<f64>() * dz
        };
        let mass = edge(&self.plus) + edge(&self.minus);
        if mass > BOUNDARY_MASS_LIMIT {
            return Err(Error::BoundaryLeak { mass, time: self.time });
        }
        Ok(())
    }
}

fn apply_potential(psi: &mut [Complex64], phase: &[Complex64], conjugate: bool) {
    for (a, p) in psi.iter_mut().zip(phase) {
        *a *= if conjugate { p.conj() } else { *p };
    }
}

fn kinetic_step(
    psi: &mut [Complex64],
    phase: &[Complex64],
    forward: &Arc<dyn Fft<f64>>,
    inverse: &Arc<dyn Fft<f64>>,
    scratch: &mut [Complex64],
) {
    forward.process_with_scratch(psi, scratch);
    for (a, p) in psi.iter_mut().zip(phase) {
        *a *= p;
    }
    inverse.process_with_scratch(psi, scratch);
}

/// Runs the magnet transit and free flight up to `t_final` after exit.
pub fn grid_evolve(config: &SgConfig, input: &SpinState, spec: GridSpec, t_final: f64) -> Result<GridSnapshot> {
    let mut solver = GridSolver::new(config, input, spec)?;
    solver.advance_to(t_final)?;
    Ok(solver.snapshot())
}
