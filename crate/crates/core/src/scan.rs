//! Force scans of the band width, collapse finding and power-law fits.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{invalid, Error, Result};
use crate::model::{classify_orientation, kappa_grid, LatticeSpec, OrientationClass, TiltSpec};
use crate::perturb::{dispersion_analytic, golden_min, order_for_terms, width_analytic};
use crate::spectrum::band_width_converged;

const MIN_COLLAPSE_ROWS: usize = 20;
const FLAT_FLOOR: f64 = 1e-6;
const COLLAPSE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandWidthRow {
    pub force: f64,
    /// NaN when the exact width could not be computed at all.
    pub width_numeric: f64,
    pub width_analytic_2term: f64,
    pub width_analytic_full: f64,
    pub site_range: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandWidthScan {
    pub rows: Vec<BandWidthRow>,
}

impl BandWidthScan {
    pub fn forces(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.force).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.width_numeric).collect()
    }

    pub fn unconverged_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| !r.converged).count() as f64 / self.rows.len() as f64
    }
}

/// Exact width of the band nearest `E = 0` and whether the truncation
/// converged.
pub fn numeric_width(lattice: &LatticeSpec, tilt: &TiltSpec, resolution: usize) -> (f64, usize, bool) {
    match band_width_converged(lattice, tilt, resolution, None) {
        Ok(bw) => (bw.width, bw.site_range, true),
        Err(Error::NotConverged { large_range, large_width, .. }) => (large_width, large_range, false),
        Err(_) => (f64::NAN, 0, false),
    }
}

/// Analytic widths at the two-term truncation and at `max_order`.
pub fn analytic_widths(lattice: &LatticeSpec, tilt: &TiltSpec, kappa_points: usize, max_order: u32) -> Result<(f64, f64)> {
    let grid = kappa_grid(tilt, kappa_points)?;
    let width_at = |order| -> Result<f64> { Ok(width_analytic(&dispersion_analytic(lattice, tilt, &grid, order)?)) };
    match classify_orientation(tilt) {
        OrientationClass::Generic => Ok((width_at(order_for_terms(tilt, 2)?)?, width_at(max_order)?)),
        _ => {
            let w = width_at(max_order)?;
            Ok((w, w))
        }
    }
}

/// One row per force of the configured scan, computed in parallel and
/// assembled in force order.
///
/// The exact width uses `kappa_points` samples per spectral period; the
/// analytic widths use `kappa_points` samples over the zone.
pub fn run_scan_width(cfg: &RunConfig) -> Result<BandWidthScan> {
    cfg.validate()?;
    let scan = cfg.scan.ok_or_else(|| invalid("width scan needs a 'scan' section"))?;
    let rows = scan
        .forces()
        .par_iter()
        .map(|&force| {
            let tilt = cfg.tilt_at(force)?;
            let (width_numeric, site_range, converged) = numeric_width(&cfg.lattice, &tilt, cfg.kappa_points);
            let (two, full) = analytic_widths(&cfg.lattice, &tilt, cfg.kappa_points, cfg.max_order)?;
            Ok(BandWidthRow {
                force,
                width_numeric,
                width_analytic_2term: two,
                width_analytic_full: full,
                site_range,
                converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BandWidthScan { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Collapse {
    pub force: f64,
    pub width: f64,
}

/// Interior local minima of `w` as `(index, peak)`, where `peak` is the
/// lower of the two neighbouring maxima.
pub fn local_minima(w: &[f64]) -> Vec<(usize, f64)> {
    let finite = |i: usize| w[i].is_finite();
    let mut found = Vec::new();
    for i in 1..w.len().saturating_sub(1) {
        if !(finite(i - 1) && finite(i) && finite(i + 1)) {
            continue;
        }
        let is_min = w[i] <= w[i - 1] && w[i] <= w[i + 1] && (w[i] < w[i - 1] || w[i] < w[i + 1]);
        if is_min {
            found.push((i, climb(w, i, -1).min(climb(w, i, 1))));
        }
    }
    found
}

/// Whether a minimum of depth `width` under neighbouring maxima `peak`
/// counts as a collapse. Maxima below `1e-6` mark a flat curve.
pub fn is_deep(width: f64, peak: f64, threshold_ratio: f64) -> bool {
    peak > FLAT_FLOOR && width <= threshold_ratio * peak
}

/// Height of the nearest local maximum walking from `i` in direction `step`.
fn climb(w: &[f64], i: usize, step: isize) -> f64 {
    let mut k = i as isize;
    let mut best = w[i];
    loop {
        let next = k + step;
        if next < 0 || next as usize >= w.len() || !w[next as usize].is_finite() || w[next as usize] < best {
            return best;
        }
        best = w[next as usize];
        k = next;
    }
}

/// Local minima of the exact width, refined by golden-section search on
/// fresh width evaluations to `Delta F <= 1e-3` and kept when the refined
/// width is at most `threshold_ratio` times the lower neighbouring maximum.
pub fn find_collapses(cfg: &RunConfig, scan: &BandWidthScan, threshold_ratio: f64) -> Result<Vec<Collapse>> {
    if scan.rows.len() < MIN_COLLAPSE_ROWS {
        return Err(Error::InsufficientData(format!(
            "collapse search needs at least {MIN_COLLAPSE_ROWS} rows, got {}",
            scan.rows.len()
        )));
    }
    let widths = scan.widths();
    let forces = scan.forces();
    let width_at = |force: f64| -> Result<f64> {
        let (w, _, _) = numeric_width(&cfg.lattice, &cfg.tilt_at(force)?, cfg.kappa_points);
        if w.is_finite() {
            Ok(w)
        } else {
            Err(invalid(format!("band width undefined at F = {force}")))
        }
    };
    let mut found = Vec::new();
    for (i, peak) in local_minima(&widths) {
        if peak <= FLAT_FLOOR {
            continue;
        }
        let (force, width) = golden_min(&width_at, forces[i - 1], forces[i + 1], COLLAPSE_TOLERANCE)?;
        if is_deep(width, peak, threshold_ratio) {
            found.push(Collapse { force, width });
        }
    }
    Ok(found)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLaw {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `ln(width)` against `ln(F)` over rows with
/// `F >= f_min_fit`.
pub fn fit_power_law(scan: &BandWidthScan, f_min_fit: f64) -> Result<PowerLaw> {
    let rows: Vec<&BandWidthRow> = scan.rows.iter().filter(|r| r.force >= f_min_fit).collect();
    if rows.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs 5 rows with F >= {f_min_fit}, got {}",
            rows.len()
        )));
    }
    if let Some(bad) = rows.iter().find(|r| !(r.width_numeric > 0.0)) {
        return Err(Error::InsufficientData(format!(
            "width {} at F = {} cannot enter a logarithmic fit",
            bad.width_numeric, bad.force
        )));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.force.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.width_numeric.ln()).collect();
    let (slope, r_squared) = crate::dynamics::linear_fit(&x, &y);
    let n = x.len() as f64;
    let intercept = (y.iter().sum::<f64>() - slope * x.iter().sum::<f64>()) / n;
    Ok(PowerLaw { slope, intercept, r_squared })
}
