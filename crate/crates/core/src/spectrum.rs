//! Exact Wannier–Stark spectrum of the reduced two-component chain.
//!
//! With the transverse plane-wave ansatz `exp(i kappa eta)` the lattice
//! reduces to a chain of A and B amplitudes indexed by `j`, with Stark
//! energies `F d j` (A) and `F d j + E0` (B) and four families of couplings:
//!
//! | bond  | partner of `A_j` | amplitude                     |
//! |-------|------------------|-------------------------------|
//! | t1    | `B_{j-q}`        | `-t1 exp(-i r kappa d)`       |
//! | t1    | `B_{j-r}`        | `-t1 exp(+i q kappa d)`       |
//! | t2    | `B_{j-q-r}`      | `-t2 exp(i (q - r) kappa d)`  |
//! | t3    | `B_j`            | `-t3`                         |
//!
//! The chain is truncated to `j in [-J, J]` with open ends.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{kappa_grid, spectral_period_grid, LatticeSpec, TiltSpec};

const AMBIGUITY_TOLERANCE: f64 = 1e-10;
const CONVERGENCE_RTOL: f64 = 1e-4;
const CONVERGENCE_ATOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sublattice {
    A,
    B,
}

/// Dense Hermitian matrix of the truncated chain at fixed quasimomentum.
#[derive(Debug, Clone)]
pub struct ReducedHamiltonian {
    lattice: LatticeSpec,
    tilt: TiltSpec,
    kappa: f64,
    site_range: usize,
    matrix: Mat<Complex64>,
}

impl ReducedHamiltonian {
    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn tilt(&self) -> &TiltSpec {
        &self.tilt
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Chain half-length `J`.
    pub fn site_range(&self) -> usize {
        self.site_range
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, Complex64> {
        self.matrix.as_ref()
    }

    /// Basis index of `(j, s)`, or `None` outside `[-J, J]`.
    pub fn index(&self, j: i64, s: Sublattice) -> Option<usize> {
        chain_index(self.site_range, j, s)
    }

    /// Largest entry of `H - H^dagger`.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in 0..n {
                let diff = self.matrix[(i, k)] - self.matrix[(k, i)].conj();
                worst = worst.max(diff.norm());
            }
        }
        worst
    }

    /// Frobenius norm of the matrix.
    pub fn norm(&self) -> f64 {
        self.matrix.norm_l2()
    }

    /// `out = H psi`.
    pub fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim();
        assert_eq!(psi.len(), n);
        assert_eq!(out.len(), n);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, p) in psi.iter().enumerate() {
                let h = self.matrix[(i, k)];
                if h.re != 0.0 || h.im != 0.0 {
                    acc += h * p;
                }
            }
            *o = acc;
        }
    }
}

pub(crate) fn chain_index(site_range: usize, j: i64, s: Sublattice) -> Option<usize> {
    let range = site_range as i64;
    if j < -range || j > range {
        return None;
    }
    let offset = match s {
        Sublattice::A => 0,
        Sublattice::B => 1,
    };
    Some(2 * (j + range) as usize + offset)
}

/// The four A-to-B coupling families as `(shift, amplitude)`: `A_j` couples
/// to `B_{j - shift}`.
pub(crate) fn chain_couplings(
    lattice: &LatticeSpec,
    tilt: &TiltSpec,
    kappa: f64,
) -> [(i64, Complex64); 4] {
    let (r, q) = (tilt.r(), tilt.q());
    let kd = kappa * tilt.d();
    let phase = |k: i64| Complex64::from_polar(1.0, k as f64 * kd);
    [
        (q, -lattice.t1 * phase(-r)),
        (r, -lattice.t1 * phase(q)),
        (q + r, -lattice.t2 * phase(q - r)),
        (0, Complex64::new(-lattice.t3, 0.0)),
    ]
}

/// Smallest admissible chain half-length: twice the coupling range when
/// any long-range bond is present.
pub fn min_site_range(lattice: &LatticeSpec, tilt: &TiltSpec) -> usize {
    if lattice.t1 == 0.0 && lattice.t2 == 0.0 {
        0
    } else {
        2 * tilt.coupling_range()
    }
}

/// Default truncation `ceil((12 sum|t| + 4 |E0|) / (F d)) + 4 (|r| + |q|)`,
/// several Wannier–Stark localisation lengths on each side of the centre.
pub fn default_site_range(lattice: &LatticeSpec, tilt: &TiltSpec) -> usize {
    let span = (12.0 * lattice.hopping_scale() + 4.0 * tilt.e0().abs()) / tilt.stark_step();
    span.ceil() as usize + 4 * tilt.coupling_range()
}

pub fn build_reduced_hamiltonian(
    lattice: &LatticeSpec,
    tilt: &TiltSpec,
    kappa: f64,
    site_range: usize,
) -> Result<ReducedHamiltonian> {
    lattice.validate()?;
    if !kappa.is_finite() {
        return Err(invalid(format!("quasimomentum must be finite, got {kappa}")));
    }
    let min = min_site_range(lattice, tilt);
    if site_range < min {
        return Err(invalid(format!(
            "chain half-length {site_range} is below the minimum {min} for direction ({}, {})",
            tilt.r(),
            tilt.q()
        )));
    }
    let n = 2 * (2 * site_range + 1);
    let mut matrix = Mat::<Complex64>::zeros(n, n);
    let range = site_range as i64;
    let step = tilt.stark_step();
    let couplings = chain_couplings(lattice, tilt, kappa);
    for j in -range..=range {
        let a = chain_index(site_range, j, Sublattice::A).unwrap();
        let b = chain_index(site_range, j, Sublattice::B).unwrap();
        matrix[(a, a)] = Complex64::new(step * j as f64, 0.0);
        matrix[(b, b)] = Complex64::new(step * j as f64 + tilt.e0(), 0.0);
        for &(shift, amplitude) in &couplings {
            if amplitude == Complex64::new(0.0, 0.0) {
                continue;
            }
            if let Some(partner) = chain_index(site_range, j - shift, Sublattice::B) {
                matrix[(a, partner)] += amplitude;
                matrix[(partner, a)] += amplitude.conj();
            }
        }
    }
    Ok(ReducedHamiltonian { lattice: *lattice, tilt: *tilt, kappa, site_range, matrix })
}

/// All eigenvalues in ascending order.
pub fn eigen_spectrum(h: &ReducedHamiltonian) -> Result<Vec<f64>> {
    h.matrix
        .as_ref()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenSolver { dim: h.dim() })
}

/// Eigenvalues (ascending) with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Mat<Complex64>,
}

pub fn eigen_decomposition(h: &ReducedHamiltonian) -> Result<Eigenpairs> {
    let evd = h
        .matrix
        .as_ref()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenSolver { dim: h.dim() })?;
    let s = evd.S();
    let values = (0..h.dim()).map(|i| s[i].re).collect();
    Ok(Eigenpairs { values, vectors: evd.U().to_owned() })
}

fn spectra_on_grid(
    lattice: &LatticeSpec,
    tilt: &TiltSpec,
    grid: &[f64],
    site_range: usize,
) -> Result<Vec<Vec<f64>>> {
    grid.par_iter()
        .map(|&kappa| {
            let h = build_reduced_hamiltonian(lattice, tilt, kappa, site_range)?;
            eigen_spectrum(&h)
        })
        .collect()
}

/// One tracked band sampled over a kappa grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionCurve {
    pub kappas: Vec<f64>,
    pub energies: Vec<f64>,
    /// Ladder index `p`: the band's mean energy in units of the flat-ladder
    /// spacing, rounded.
    pub band_label: i64,
    pub width: f64,
}

impl DispersionCurve {
    pub fn mean_energy(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.energies.len() as f64
    }
}

/// Follows one band through a sequence of sorted spectra.
///
/// Each step picks the eigenvalue nearest to the linear extrapolation of the
/// two previous energies, which carries the band through exact crossings.
struct BandTracker {
    history: [f64; 2],
    steps: usize,
}

impl BandTracker {
    fn start(spectrum: &[f64], reference: f64) -> (Self, f64) {
        let e = nearest(spectrum, reference).0;
        (Self { history: [e, e], steps: 1 }, e)
    }

    fn prediction(&self) -> f64 {
        if self.steps >= 2 {
            2.0 * self.history[1] - self.history[0]
        } else {
            self.history[1]
        }
    }

    fn advance(&mut self, spectrum: &[f64], kappa: f64) -> Result<f64> {
        let predicted = self.prediction();
        let (best, runner_up) = nearest(spectrum, predicted);
        if let Some(other) = runner_up {
            let gap = (other - predicted).abs() - (best - predicted).abs();
            if gap < AMBIGUITY_TOLERANCE && (other - best).abs() > AMBIGUITY_TOLERANCE {
                return Err(Error::TrackingAmbiguity { kappa, first: best, second: other });
            }
        }
        self.history = [self.history[1], best];
        self.steps += 1;
        Ok(best)
    }
}

/// Nearest eigenvalue to `target` and the second nearest, in a sorted slice.
fn nearest(sorted: &[f64], target: f64) -> (f64, Option<f64>) {
    let split = sorted.partition_point(|&e| e < target);
    let mut candidates: Vec<f64> = sorted[split.saturating_sub(2)..(split + 2).min(sorted.len())].to_vec();
    candidates.sort_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()));
    (candidates[0], candidates.get(1).copied())
}

fn closes(start: f64, end: f64) -> bool {
    (end - start).abs() <= 1e-9 * (1.0 + start.abs())
}

fn bulk_check(tilt: &TiltSpec, reference: f64, site_range: usize) -> Result<()> {
    let bulk = tilt.stark_step() * site_range as f64 / 2.0;
    if reference.abs() > bulk {
        return Err(invalid(format!(
            "reference energy {reference} lies outside the bulk window |E| <= {bulk}"
        )));
    }
    Ok(())
}

fn track_on_grid(spectra: &[Vec<f64>], grid: &[f64], reference: f64) -> Result<(Vec<f64>, BandTracker)> {
    let (mut tracker, first) = BandTracker::start(&spectra[0], reference);
    let mut energies = Vec::with_capacity(grid.len());
    energies.push(first);
    for (spectrum, &kappa) in spectra.iter().zip(grid).skip(1) {
        energies.push(tracker.advance(spectrum, kappa)?);
    }
    Ok((energies, tracker))
}

fn spans_zone(tilt: &TiltSpec, grid: &[f64]) -> bool {
    if grid.len() < 2 {
        return false;
    }
    let step = grid[1] - grid[0];
    let zone = tilt.zone_length();
    grid[0] == 0.0 && ((grid[grid.len() - 1] + step) - zone).abs() < 1e-9 * zone
}

/// Tracks the band that starts nearest to `band_ref_energy` at the first
/// grid point.
///
/// When the grid covers the whole zone `[0, 2 pi / d)` the band must close
/// on itself at `kappa = 2 pi / d`.
pub fn dispersion_numeric(
    lattice: &LatticeSpec,
    tilt: &TiltSpec,
    grid: &[f64],
    band_ref_energy: f64,
    site_range: usize,
) -> Result<DispersionCurve> {
    if grid.is_empty() {
        return Err(invalid("empty kappa grid"));
    }
    bulk_check(tilt, band_ref_energy, site_range)?;
    let spectra = spectra_on_grid(lattice, tilt, grid, site_range)?;
    let (energies, mut tracker) = track_on_grid(&spectra, grid, band_ref_energy)?;
    if spans_zone(tilt, grid) {
        let end = tracker.advance(&spectra[0], tilt.zone_length())?;
        if !closes(energies[0], end) {
            return Err(Error::TrackingNotPeriodic { start: energies[0], end });
        }
    }
    Ok(curve_from(grid.to_vec(), energies, tilt))
}

fn curve_from(kappas: Vec<f64>, energies: Vec<f64>, tilt: &TiltSpec) -> DispersionCurve {
    let (lo, hi) = min_max(&energies);
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    DispersionCurve {
        kappas,
        energies,
        band_label: (mean / tilt.flat_ladder_spacing()).round() as i64,
        width: hi - lo,
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Image of an energy of one ladder under the reflection that maps it onto
/// the other ladder: `-E` when `(r + q)/2` is an integer, `-E + F d / 2`
/// otherwise.
pub fn ladder_reflection(tilt: &TiltSpec, energy: f64) -> f64 {
    if tilt.has_integer_half_sum() {
        -energy
    } else {
        -energy + tilt.stark_step() / 2.0
    }
}

/// Tracks the partner band of `curve` and returns
/// `max_kappa |E_2(kappa) - S(E_1(kappa))|`.
pub fn ladder_symmetry_residual(
    curve: &DispersionCurve,
    lattice: &LatticeSpec,
    tilt: &TiltSpec,
    site_range: usize,
) -> Result<f64> {
    let target = ladder_reflection(tilt, curve.energies[0]);
    let partner = dispersion_numeric(lattice, tilt, &curve.kappas, target, site_range)?;
    Ok(partner
        .energies
        .iter()
        .zip(&curve.energies)
        .map(|(e2, e1)| (e2 - ladder_reflection(tilt, *e1)).abs())
        .fold(0.0, f64::max))
}

/// Width of a band measured over one spectral period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandWidth {
    pub width: f64,
    pub mean_energy: f64,
    pub site_range: usize,
}

/// Width of the band starting nearest `reference` at `kappa = 0`, sampled
/// with `resolution` points per spectral period `2 pi / ((r^2 + q^2) d)`.
///
/// The spectrum repeats with that period but an individual band may be
/// carried onto a different band; tracking continues period after period
/// until the band returns to its starting energy.
pub fn band_width(
    lattice: &LatticeSpec,
    tilt: &TiltSpec,
    resolution: usize,
    site_range: usize,
    reference: f64,
) -> Result<BandWidth> {
    bulk_check(tilt, reference, site_range)?;
    let grid = spectral_period_grid(tilt, resolution)?;
    let spectra = spectra_on_grid(lattice, tilt, &grid, site_range)?;
    let (mut energies, mut tracker) = track_on_grid(&spectra, &grid, reference)?;
    let start = energies[0];
    let period = tilt.spectral_period();
    let max_periods = tilt.norm_sq() as usize;
    let mut closed = false;
    'periods: for p in 1..=max_periods {
        for (i, spectrum) in spectra.iter().enumerate() {
            let kappa = p as f64 * period + grid[i];
            let e = tracker.advance(spectrum, kappa)?;
            if i == 0 && closes(start, e) {
                closed = true;
                break 'periods;
            }
            energies.push(e);
        }
    }
    if !closed {
        return Err(Error::TrackingNotPeriodic { start, end: *energies.last().unwrap() });
    }
    let (lo, hi) = min_max(&energies);
    Ok(BandWidth {
        width: hi - lo,
        mean_energy: energies.iter().sum::<f64>() / energies.len() as f64,
        site_range,
    })
}

/// [`band_width`] of the band nearest `E = 0`, repeated with the chain
/// doubled until two successive widths agree to a relative `1e-4`.
///
/// `site_range` defaults to [`default_site_range`].
pub fn band_width_converged(
    lattice: &LatticeSpec,
    tilt: &TiltSpec,
    resolution: usize,
    site_range: Option<usize>,
) -> Result<BandWidth> {
    let mut range = site_range
        .unwrap_or_else(|| default_site_range(lattice, tilt))
        .max(min_site_range(lattice, tilt));
    let mut previous = band_width(lattice, tilt, resolution, range, 0.0)?;
    for _ in 0..MAX_DOUBLINGS {
        range *= 2;
        let next = band_width(lattice, tilt, resolution, range, 0.0)?;
        let scale = previous.width.max(next.width);
        if (next.width - previous.width).abs() <= CONVERGENCE_RTOL * scale + CONVERGENCE_ATOL {
            return Ok(next);
        }
        previous = next;
    }
    let small = band_width(lattice, tilt, resolution, range / 2, 0.0)?;
    Err(Error::NotConverged {
        small_range: range / 2,
        small_width: small.width,
        large_range: range,
        large_width: previous.width,
    })
}

/// [`dispersion_numeric`] on `kappa_grid(tilt, n_points)` for the band
/// nearest `E = 0`, with the default truncation.
pub fn central_band(lattice: &LatticeSpec, tilt: &TiltSpec, n_points: usize) -> Result<DispersionCurve> {
    let grid = kappa_grid(tilt, n_points)?;
    dispersion_numeric(lattice, tilt, &grid, 0.0, default_site_range(lattice, tilt))
}
