//! Run configuration in TOML with strict key checking.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::ReconConfig;
use crate::geometry::TargetConfig;
use crate::grid::Grid2D;
use crate::heat::HeatConfig;
use crate::stress::ConeConfig;
use crate::wave::InitialDataSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per side, a power of two.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Spacing; defaults to `1/n` (unit box).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

fn default_n() -> usize {
    64
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: default_n(), h: None }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        match self.h {
            Some(h) => Grid2D::new(self.n, h),
            None => Grid2D::with_extent(self.n, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    /// Final time `T`.
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// `dt/h`, used when `dt` is not given.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub data: InitialDataSpec,
}

fn default_t_final() -> f64 {
    0.25
}
fn default_cfl() -> f64 {
    0.4
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig { t_final: default_t_final(), cfl: default_cfl(), dt: None, data: InitialDataSpec::default() }
    }
}

impl WaveConfig {
    pub fn dt(&self, grid: &Grid2D) -> f64 {
        self.dt.unwrap_or(self.cfl * grid.h)
    }
}

/// Which slices get a heat ladder and the caloric gauge, and the reconstruction settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    /// Wave times of the analysed slices, moved to the nearest snapshot.
    #[serde(default = "default_gauge_times")]
    pub times: Vec<f64>,
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    #[serde(default = "default_tail_window")]
    pub tail_window: usize,
    /// Random constant rotations used for the gauge-invariance check.
    #[serde(default = "default_rotations")]
    pub random_rotations: usize,
}

fn default_gauge_times() -> Vec<f64> {
    vec![0.0]
}
fn default_tail_tolerance() -> f64 {
    ReconConfig::default().tail_tolerance
}
fn default_tail_window() -> usize {
    ReconConfig::default().tail_window
}
fn default_rotations() -> usize {
    3
}

impl Default for GaugeConfig {
    fn default() -> Self {
        GaugeConfig {
            times: default_gauge_times(),
            tail_tolerance: default_tail_tolerance(),
            tail_window: default_tail_window(),
            random_rotations: default_rotations(),
        }
    }
}

impl GaugeConfig {
    pub fn recon(&self) -> ReconConfig {
        ReconConfig { tail_tolerance: self.tail_tolerance, tail_window: self.tail_window }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default)]
    pub cones: Vec<ConeConfig>,
    /// Relative slack for the heat-flow monotonicity checks.
    #[serde(default = "default_monotone_tolerance")]
    pub monotone_tolerance: f64,
}

fn default_monotone_tolerance() -> f64 {
    1e-10
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { cones: Vec::new(), monotone_tolerance: default_monotone_tolerance() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Write every `snapshot_every`-th wave state to disk; 0 writes only the first and last.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_true")]
    pub csv: bool,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_directory(), snapshot_every: 0, csv: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for the randomized checks (gauge rotations).
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub wave: WaveConfig,
    #[serde(default)]
    pub heat: HeatConfig,
    #[serde(default)]
    pub gauge: GaugeConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        let grid = self.grid.grid()?;
        let w = &self.wave;
        if !(w.cfl > 0.0 && w.cfl <= 0.5) {
            return Err(Error::validation("wave.cfl", format!("need 0 < cfl <= 0.5, got {}", w.cfl)));
        }
        if let Some(dt) = w.dt {
            if !(dt > 0.0 && dt <= 0.5 * grid.h) {
                return Err(Error::validation("wave.dt", format!("need 0 < dt <= h/2 = {}, got {dt}", 0.5 * grid.h)));
            }
        }
        if !(w.t_final >= 0.0 && w.t_final.is_finite()) {
            return Err(Error::validation("wave.t_final", "must be finite and non-negative"));
        }
        w.data.validate(&self.target)?;
        self.heat.validate()?;
        self.heat.substep(&grid)?;
        self.gauge.recon().validate()?;
        if self.gauge.times.iter().any(|&t| !(0.0..=w.t_final).contains(&t)) {
            return Err(Error::validation("gauge.times", format!("times must lie in [0, {}]", w.t_final)));
        }
        for cone in &self.diagnostics.cones {
            cone.validate()?;
        }
        if !(self.diagnostics.monotone_tolerance >= 0.0) {
            return Err(Error::validation("diagnostics.monotone_tolerance", "must be non-negative"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML form with every default written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_toml(&std::fs::read_to_string(path)?)
}
