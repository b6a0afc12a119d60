//! CSV artifacts with a JSON metadata sidecar.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that they round-trip exactly and identical runs give identical bytes.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::dynamics::SpreadTrajectory;
use crate::error::{Error, Result};
use crate::perturb::AnalyticDispersion;
use crate::scan::{BandWidthScan, Collapse};
use crate::spectrum::DispersionCurve;

/// Anything that can be written as one CSV table.
pub trait CsvTable {
    fn header(&self) -> Vec<&'static str>;
    fn records(&self) -> Vec<Vec<String>>;
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl CsvTable for BandWidthScan {
    fn header(&self) -> Vec<&'static str> {
        vec!["F", "width_numeric", "width_analytic_2term", "width_analytic_full", "J_used", "converged"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    format_float(r.force),
                    format_float(r.width_numeric),
                    format_float(r.width_analytic_2term),
                    format_float(r.width_analytic_full),
                    r.site_range.to_string(),
                    r.converged.to_string(),
                ]
            })
            .collect()
    }
}

impl CsvTable for DispersionCurve {
    fn header(&self) -> Vec<&'static str> {
        vec!["kappa", "E"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.kappas.iter().zip(&self.energies).map(|(k, e)| vec![format_float(*k), format_float(*e)]).collect()
    }
}

impl CsvTable for AnalyticDispersion {
    fn header(&self) -> Vec<&'static str> {
        vec!["kappa", "e_plus", "e_minus"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        (0..self.kappas.len())
            .map(|i| vec![format_float(self.kappas[i]), format_float(self.e_plus[i]), format_float(self.e_minus[i])])
            .collect()
    }
}

impl CsvTable for SpreadTrajectory {
    fn header(&self) -> Vec<&'static str> {
        vec!["t", "sigma_eta", "sigma_xi"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        (0..self.times.len())
            .map(|i| vec![format_float(self.times[i]), format_float(self.sigma_eta[i]), format_float(self.sigma_xi[i])])
            .collect()
    }
}

/// Collapses found in a scan next to the closed-form predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseTable {
    pub found: Vec<Collapse>,
    /// Predicted forces in the same order; NaN where none is available.
    pub predicted: Vec<f64>,
}

impl CsvTable for CollapseTable {
    fn header(&self) -> Vec<&'static str> {
        vec!["k", "F", "width_min", "F_predicted"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.found
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let predicted = self.predicted.get(i).copied().unwrap_or(f64::NAN);
                vec![(i + 1).to_string(), format_float(c.force), format_float(c.width), format_float(predicted)]
            })
            .collect()
    }
}

/// Bessel values `J_n(z)` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesselTable {
    pub rows: Vec<(i64, f64, f64)>,
}

impl CsvTable for BesselTable {
    fn header(&self) -> Vec<&'static str> {
        vec!["order", "z", "J"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(|(n, z, j)| vec![n.to_string(), format_float(*z), format_float(*j)]).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a> {
    pub config: &'a RunConfig,
    pub version: &'static str,
    pub wall_time_seconds: f64,
    pub summary: serde_json::Value,
}

/// `<path>.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes `table` to `path` and the metadata next to it.
pub fn emit(table: &dyn CsvTable, path: &Path, meta: &Metadata<'_>) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_owned(), source };
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    writer.write_record(table.header()).map_err(csv_err)?;
    for record in table.records() {
        writer.write_record(&record).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| Error::Io { path: path.to_owned(), source })?;
    let side = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(meta).map_err(|source| Error::Json { path: side.clone(), source })?;
    text.push('\n');
    std::fs::write(&side, text).map_err(|source| Error::Io { path: side, source })
}

pub fn metadata<'a>(config: &'a RunConfig, wall_time_seconds: f64, summary: serde_json::Value) -> Metadata<'a> {
    Metadata { config, version: env!("CARGO_PKG_VERSION"), wall_time_seconds, summary }
}
