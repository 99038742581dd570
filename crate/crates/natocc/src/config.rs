//! Run configuration: JSON schema, validation, and model assembly.
//!
//! Example accepted by every subcommand:
//!
//! ```json
//! {
//!   "L": 4, "N": 3, "t_hop": 1.0, "U": 1.0,
//!   "sector": { "m": 0.5, "T": 1 },
//!   "quench": [ { "t": 0.0, "U": 2.0 } ],
//!   "dynamics": { "t_start": 0.0, "t_end": 5.0, "step": 0.001 }
//! }
//! ```
//!
//! Unknown keys are rejected everywhere; the full schema is documented in the
//! repository README.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ReducedOptions, TimeGrid};
use crate::fock::SectorLabel;
use crate::model::{build_hubbard, BasisKind, IntegralSet, ModelError, QuenchProtocol};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("magnetization m = {m} is not a half-integer")]
    BadMagnetization { m: f64 },
    #[error("Bloch number T = {t} is outside [0, {l})")]
    BadBloch { t: i64, l: usize },
    #[error("quench times must be non-negative and strictly increasing")]
    BadQuench,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn default_true() -> bool {
    true
}

fn default_t_end() -> f64 {
    5.0
}

fn default_step() -> f64 {
    1e-3
}

fn default_degeneracy_tol() -> f64 {
    1e-8
}

fn default_phase_freeze_tol() -> f64 {
    1e-12
}

fn default_trials() -> usize {
    100
}

fn default_lambda() -> f64 {
    1e-3
}

fn default_gap_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisChoice {
    Momentum,
    Site,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorConfig {
    pub m: f64,
    #[serde(rename = "T")]
    pub t: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchStep {
    pub t: f64,
    #[serde(rename = "U", default)]
    pub u: Option<f64>,
    #[serde(default)]
    pub t_hop: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_degeneracy_tol")]
    pub degeneracy_tol: f64,
    #[serde(default = "default_phase_freeze_tol")]
    pub phase_freeze_tol: f64,
    /// Abort on degenerate initial occupations (strict mode). Disable to
    /// tolerate degeneracies that carry no orbital coupling.
    #[serde(default = "default_true")]
    pub strict_degeneracy: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            t_start: 0.0,
            t_end: default_t_end(),
            step: default_step(),
            degeneracy_tol: default_degeneracy_tol(),
            phase_freeze_tol: default_phase_freeze_tol(),
            strict_degeneracy: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            seed: 0,
            trials: default_trials(),
            lambda: default_lambda(),
            gap_tol: default_gap_tol(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; overridden by the NATOCC_OUT_DIR environment
    /// variable when set.
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub prefix: Option<String>,
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "L")]
    pub sites: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    pub t_hop: f64,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryKind,
    #[serde(default = "default_basis")]
    pub basis: BasisChoice,
    pub sector: SectorConfig,
    #[serde(default)]
    pub quench: Vec<QuenchStep>,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub perturb: Option<PerturbationConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub task: Option<String>,
}

fn default_boundary() -> BoundaryKind {
    BoundaryKind::Periodic
}

fn default_basis() -> BasisChoice {
    BasisChoice::Momentum
}

impl RunConfig {
    pub fn from_path(path: &str) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_string(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let two_m = 2.0 * self.sector.m;
        if (two_m - two_m.round()).abs() > 1e-9 {
            return Err(ConfigError::BadMagnetization { m: self.sector.m });
        }
        if self.sector.t < 0 || self.sector.t as usize >= self.sites {
            return Err(ConfigError::BadBloch {
                t: self.sector.t,
                l: self.sites,
            });
        }
        let mut prev = -1.0;
        for q in &self.quench {
            if q.t < 0.0 || q.t <= prev {
                return Err(ConfigError::BadQuench);
            }
            prev = q.t;
        }
        Ok(())
    }

    pub fn sector_label(&self) -> SectorLabel {
        SectorLabel::new((2.0 * self.sector.m).round() as i64, self.sector.t as usize)
    }

    fn basis_kind(&self) -> BasisKind {
        match self.basis {
            BasisChoice::Momentum => BasisKind::Momentum,
            BasisChoice::Site => BasisKind::Site,
        }
    }

    /// Integrals of the unquenched model (used to prepare initial states).
    pub fn base_integrals(&self) -> Result<IntegralSet, ConfigError> {
        Ok(build_hubbard(
            self.sites,
            self.t_hop,
            self.u,
            self.boundary == BoundaryKind::Periodic,
            self.basis_kind(),
        )?)
    }

    /// The piecewise-constant schedule: the base model, overridden by each
    /// quench step in turn (parameters not named in a step carry over).
    pub fn protocol(&self) -> Result<QuenchProtocol, ConfigError> {
        let periodic = self.boundary == BoundaryKind::Periodic;
        let mut segments: Vec<(f64, IntegralSet)> = Vec::new();
        let mut u = self.u;
        let mut t_hop = self.t_hop;
        if self.quench.first().map(|q| q.t) != Some(0.0) {
            segments.push((0.0, self.base_integrals()?));
        }
        for step in &self.quench {
            u = step.u.unwrap_or(u);
            t_hop = step.t_hop.unwrap_or(t_hop);
            segments.push((
                step.t,
                build_hubbard(self.sites, t_hop, u, periodic, self.basis_kind())?,
            ));
        }
        Ok(QuenchProtocol::new(segments)?)
    }

    pub fn grid(&self) -> Result<TimeGrid, crate::dynamics::DynamicsError> {
        TimeGrid::new(
            self.dynamics.t_start,
            self.dynamics.t_end,
            self.dynamics.step,
        )
    }

    pub fn reduced_options(&self) -> ReducedOptions {
        ReducedOptions {
            degeneracy_tol: self.dynamics.degeneracy_tol,
            phase_freeze_tol: self.dynamics.phase_freeze_tol,
            strict_degeneracy: self.dynamics.strict_degeneracy,
        }
    }
}
