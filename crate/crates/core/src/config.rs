//! Run configuration shared by the command-line front end and the scans.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::PacketKind;
use crate::error::{invalid, Error, Result};
use crate::model::{make_tilt, LatticeSpec, TiltSpec};
use crate::perturb::DEFAULT_MAX_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Spectrum,
    ScanWidth,
    Collapse,
    Analytic,
    Propagate,
    Bessel,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| invalid(format!("unknown mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceScan {
    pub f_min: f64,
    pub f_max: f64,
    pub n_points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Linear
}

impl ForceScan {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0) || !self.f_min.is_finite() {
            return Err(invalid(format!("scan f_min must be positive, got {}", self.f_min)));
        }
        if self.n_points == 0 {
            return Err(invalid("scan needs at least one point"));
        }
        if self.n_points > 1 && !(self.f_max > self.f_min) || !self.f_max.is_finite() {
            return Err(invalid(format!(
                "scan needs f_max > f_min, got [{}, {}]",
                self.f_min, self.f_max
            )));
        }
        Ok(())
    }

    /// Forces in increasing order.
    pub fn forces(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![self.f_min];
        }
        let last = (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| {
                let s = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.f_min + s * (self.f_max - self.f_min),
                    Spacing::Log => self.f_min * (self.f_max / self.f_min).powf(s),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Direction {
    pub r: i64,
    pub q: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "default_extent")]
    pub extent: (usize, usize),
    #[serde(default = "default_packet")]
    pub packet: PacketKind,
}

fn default_extent() -> (usize, usize) {
    (128, 128)
}

fn default_packet() -> PacketKind {
    PacketKind::SingleSite
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesselConfig {
    pub orders: Vec<i64>,
    pub z_min: f64,
    pub z_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub lattice: LatticeSpec,
    #[serde(default = "default_direction")]
    pub tilt: Direction,
    /// Force for the single-force modes.
    #[serde(default)]
    pub force: Option<f64>,
    #[serde(default)]
    pub scan: Option<ForceScan>,
    /// kappa samples over the zone; for width scans, per spectral period.
    #[serde(default = "default_kappa_points")]
    pub kappa_points: usize,
    #[serde(default = "default_max_order")]
    pub max_order: u32,
    #[serde(default = "default_threshold")]
    pub collapse_threshold: f64,
    #[serde(default)]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default)]
    pub bessel: Option<BesselConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_direction() -> Direction {
    Direction { r: 2, q: 1 }
}

fn default_kappa_points() -> usize {
    256
}

fn default_max_order() -> u32 {
    DEFAULT_MAX_ORDER
}

fn default_threshold() -> f64 {
    0.05
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            lattice: LatticeSpec::default(),
            tilt: default_direction(),
            force: None,
            scan: None,
            kappa_points: default_kappa_points(),
            max_order: default_max_order(),
            collapse_threshold: default_threshold(),
            dynamics: None,
            bessel: None,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
        Self::from_json(&text).map_err(|source| Error::Json { path: path.to_owned(), source })
    }

    /// Checks every field needed by the selected mode.
    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        if self.kappa_points < 4 {
            return Err(invalid(format!("kappa_points must be at least 4, got {}", self.kappa_points)));
        }
        if self.max_order == 0 {
            return Err(invalid("max_order must be at least 1"));
        }
        if !(self.collapse_threshold > 0.0) {
            return Err(invalid("collapse_threshold must be positive"));
        }
        if let Some(scan) = &self.scan {
            scan.validate()?;
        }
        match self.mode {
            Mode::Spectrum | Mode::Analytic | Mode::Propagate => {
                self.tilt_at(self.single_force()?)?;
            }
            Mode::ScanWidth | Mode::Collapse => {
                let scan = self.scan.ok_or_else(|| invalid("this mode needs a 'scan' section"))?;
                self.tilt_at(scan.f_min)?;
            }
            Mode::Bessel => {}
        }
        if self.mode == Mode::Propagate {
            let dyn_cfg = self.dynamics.ok_or_else(|| invalid("propagate needs a 'dynamics' section"))?;
            if !(dyn_cfg.t_final > 0.0) || !(dyn_cfg.dt > 0.0) {
                return Err(invalid("dynamics needs positive t_final and dt"));
            }
        }
        if self.mode == Mode::Bessel {
            let b = self.bessel.as_ref().ok_or_else(|| invalid("bessel needs a 'bessel' section"))?;
            if b.orders.is_empty() || b.n_points == 0 || !(b.z_max >= b.z_min) || !b.z_min.is_finite() || !b.z_max.is_finite() {
                return Err(invalid("bessel section needs orders, n_points >= 1 and z_min <= z_max"));
            }
        }
        Ok(())
    }

    pub fn single_force(&self) -> Result<f64> {
        self.force.ok_or_else(|| invalid("this mode needs 'force'"))
    }

    pub fn tilt_at(&self, force: f64) -> Result<TiltSpec> {
        make_tilt(self.tilt.r, self.tilt.q, force, &self.lattice)
    }
}
