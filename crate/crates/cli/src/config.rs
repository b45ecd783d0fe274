//! Run configuration: one JSON file, versioned, unknown keys rejected.

use std::path::{Path, PathBuf};

use nosig_core::protocol::{Model, PipelineOptions};
use nosig_core::wavepacket::{Region, SgConfig, DEFAULT_SATURATION_TOL};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub sg: SgConfig,
    /// Alice's settings, radians.
    pub omega_list: Vec<f64>,
    /// Bob's final measurement angles, radians.
    pub theta_list: Vec<f64>,
    #[serde(default = "default_model")]
    pub model: Model,
    /// Particles per measurement axis; 0 runs the analytic checks only.
    #[serde(default)]
    pub samples: u64,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Upper edge of the post-selection window; absent means the whole upper half-line.
    #[serde(default)]
    pub window: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub saturation: SaturationSettings,
    #[serde(default)]
    pub oracle: OracleSettings,
}

fn default_model() -> Model {
    Model::Projected
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Bound on `|PA_total - PB_total|` from the pipeline.
    pub residual: f64,
    /// Bound on the distance of `(φ₊, φ₋)` from the constraint.
    pub phase: f64,
    /// Width, in standard deviations, of sample-level agreement checks.
    pub sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { residual: 1e-9, phase: 1e-9, sigmas: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationSettings {
    pub tol: f64,
    pub horizon: f64,
}

impl Default for SaturationSettings {
    fn default() -> Self {
        SaturationSettings { tol: DEFAULT_SATURATION_TOL, horizon: 1e12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSettings {
    pub points: usize,
    /// Margin, in packet widths, beyond the outermost channel center.
    pub sigmas: f64,
    /// Input polarization angle for the comparison.
    pub input_angle: f64,
    /// Comparison times after the magnet; empty picks ten times out to twice
    /// the saturation time at `saturation_tol`.
    pub times: Vec<f64>,
    pub saturation_tol: f64,
    pub e_tol: f64,
    pub modulus_tol: f64,
    pub phase_tol: f64,
    /// Largest transit/spreading-time ratio treated as impulsive.
    pub impulsive_limit: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            points: 1 << 14,
            sigmas: 10.0,
            input_angle: std::f64::consts::FRAC_PI_2,
            times: Vec::new(),
            saturation_tol: 1e-4,
            e_tol: 1e-3,
            modulus_tol: 1e-3,
            phase_tol: 1e-2,
            impulsive_limit: 0.01,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub inject_violation: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| {
            let line = text.lines().nth(e.line().saturating_sub(1)).unwrap_or("");
            CliError::Config(format!("{origin}:{}:{}: {e}\n    {}", e.line(), e.column(), line.trim_end()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        self.sg.validate().map_err(|e| CliError::Config(format!("sg: {e}")))?;
        for (name, list) in [("omega_list", &self.omega_list), ("theta_list", &self.theta_list)] {
            if list.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if let Some(x) = list.iter().find(|x| !x.is_finite()) {
                return bad(format!("{name} contains {x}"));
            }
        }
        if let Some(w) = self.window {
            if !(w > 0.0) {
                return bad(format!("window = {w} must be positive"));
            }
        }
        let t = &self.tolerances;
        if !(t.residual > 0.0 && t.phase > 0.0 && t.sigmas > 0.0) {
            return bad("tolerances must be positive".into());
        }
        let s = &self.saturation;
        if !(s.tol > 0.0 && s.horizon > 0.0) {
            return bad("saturation.tol and saturation.horizon must be positive".into());
        }
        let o = &self.oracle;
        if !o.points.is_power_of_two() || o.points < 16 {
            return bad(format!("oracle.points = {} must be a power of two >= 16", o.points));
        }
        if o.times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return bad("oracle.times must be non-negative".into());
        }
        if !(o.saturation_tol > 0.0 && o.sigmas > 0.0 && o.e_tol > 0.0 && o.modulus_tol > 0.0 && o.phase_tol > 0.0) {
            return bad("oracle tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.root_seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.output_dir = out.clone();
        }
    }

    pub fn region(&self) -> Region {
        match self.window {
            Some(w) => Region::upper_window(w),
            None => Region::upper(),
        }
    }

    pub fn pipeline_options(&self, inject_violation: f64) -> PipelineOptions {
        PipelineOptions {
            model: self.model,
            saturation_tol: self.saturation.tol,
            horizon: self.saturation.horizon,
            region: self.region(),
            inject_violation,
        }
    }
}
