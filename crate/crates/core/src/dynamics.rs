//! Wavepacket propagation on the two-dimensional lattice.
//!
//! Cells `(n1, n2)` sit on a square grid of spacing `sqrt(2) a` centred on
//! the origin. Sublattice A is at the cell origin and B is offset by half a
//! cell diagonal. Each A site bonds to four B sites:
//! `B(n1 - 1, n2)` and `B(n1, n2 - 1)` with `-t1`, `B(n1 - 1, n2 - 1)` with
//! `-t2` and `B(n1, n2)` with `-t3`.
//!
//! Along the force, `xi = d (r n1 + q n2)` (B adds `d (r + q) / 2`);
//! across it, `eta = d (r n2 - q n1)` (B adds `d (r - q) / 2`). A plane wave
//! `exp(i kappa eta_cell) phi_s(j)` with `j = r n1 + q n2` is mapped by the
//! lattice Hamiltonian onto the reduced chain at the same `kappa`.
//!
//! Time evolution uses a Chebyshev expansion of `exp(-i H dt)`, so each step
//! is accurate to machine precision regardless of its length.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::table;
use crate::error::{invalid, Error, Result};
use crate::model::{LatticeSpec, TiltSpec};
use crate::spectrum::chain_couplings;

const BOUNDARY_CELLS: usize = 2;
const BOUNDARY_TOLERANCE: f64 = 1e-8;
const NORM_TOLERANCE: f64 = 1e-6;
const SAMPLES: usize = 100;
const PLANE_WAVE_TOLERANCE: f64 = 1e-12;

/// Sites, on-site energies and bonds of a finite patch.
#[derive(Debug, Clone)]
pub struct Lattice2D {
    lattice: LatticeSpec,
    tilt: TiltSpec,
    extent: (usize, usize),
    onsite: Vec<f64>,
    /// Up to four `(site, amplitude)` bonds per site.
    bonds: Vec<Vec<(usize, f64)>>,
    xi: Vec<f64>,
    eta: Vec<f64>,
    boundary: Vec<usize>,
}

impl Lattice2D {
    pub fn extent(&self) -> (usize, usize) {
        self.extent
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn tilt(&self) -> &TiltSpec {
        &self.tilt
    }

    pub fn n_sites(&self) -> usize {
        self.onsite.len()
    }

    /// Cell coordinates `(n1, n2)` of grid position `(i1, i2)`.
    pub fn cell(&self, i1: usize, i2: usize) -> (i64, i64) {
        (i1 as i64 - (self.extent.0 / 2) as i64, i2 as i64 - (self.extent.1 / 2) as i64)
    }

    /// Site index of sublattice `s` (0 = A, 1 = B) in cell `(n1, n2)`.
    pub fn site(&self, n1: i64, n2: i64, s: usize) -> Option<usize> {
        let i1 = n1 + (self.extent.0 / 2) as i64;
        let i2 = n2 + (self.extent.1 / 2) as i64;
        if i1 < 0 || i2 < 0 || i1 >= self.extent.0 as i64 || i2 >= self.extent.1 as i64 {
            return None;
        }
        Some(2 * (i1 as usize * self.extent.1 + i2 as usize) + s)
    }

    pub fn onsite(&self) -> &[f64] {
        &self.onsite
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn bonds(&self, site: usize) -> &[(usize, f64)] {
        &self.bonds[site]
    }

    /// Largest on-site magnitude plus twice the total hopping per A site.
    pub fn energy_scale(&self) -> f64 {
        let max_onsite = self.onsite.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let l = &self.lattice;
        max_onsite + 2.0 * (2.0 * l.t1.abs() + l.t2.abs() + l.t3.abs())
    }

    /// Gershgorin bounds on the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        self.onsite.iter().zip(&self.bonds).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (e, b)| {
            let radius: f64 = b.iter().map(|(_, t)| t.abs()).sum();
            (lo.min(e - radius), hi.max(e + radius))
        })
    }

    /// `out = H psi`.
    pub fn apply(&self, psi: &[Complex64], out: &mut [Complex64]) {
        self.apply_shifted(psi, out, 0.0, 1.0);
    }

    /// `out = (H - shift) psi / scale`.
    fn apply_shifted(&self, psi: &[Complex64], out: &mut [Complex64], shift: f64, scale: f64) {
        out.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, o)| {
            let mut acc = psi[i] * (self.onsite[i] - shift);
            for &(k, t) in &self.bonds[i] {
                acc += psi[k] * t;
            }
            *o = acc / scale;
        });
    }

    /// Largest relative mismatch between the lattice action on plane waves
    /// `exp(i kappa eta_cell) phi_s(j)` and the reduced chain action on
    /// `phi`, over sites whose four bonds lie inside the patch.
    pub fn plane_wave_residual(&self, kappa: f64) -> f64 {
        let (r, q) = (self.tilt.r(), self.tilt.q());
        let d = self.tilt.d();
        let phi = |j: i64, s: usize| {
            let x = j as f64;
            Complex64::from_polar(1.0 + 0.01 * x * x, 0.37 * x * x + 1.1 * s as f64 + 0.2 * x)
        };
        let mut psi = vec![Complex64::new(0.0, 0.0); self.n_sites()];
        let mut labels = vec![(0i64, 0i64, 0i64); self.n_sites() / 2];
        for i1 in 0..self.extent.0 {
            for i2 in 0..self.extent.1 {
                let (n1, n2) = self.cell(i1, i2);
                let j = r * n1 + q * n2;
                let eta_cell = d * (r * n2 - q * n1) as f64;
                let wave = Complex64::from_polar(1.0, kappa * eta_cell);
                let a = self.site(n1, n2, 0).unwrap();
                psi[a] = wave * phi(j, 0);
                psi[a + 1] = wave * phi(j, 1);
                labels[a / 2] = (n1, n2, j);
            }
        }
        let mut h_psi = vec![Complex64::new(0.0, 0.0); self.n_sites()];
        self.apply(&psi, &mut h_psi);
        let couplings = chain_couplings(&self.lattice, &self.tilt, kappa);
        let step = self.tilt.stark_step();
        let mut worst: f64 = 0.0;
        for (cell, &(n1, n2, j)) in labels.iter().enumerate() {
            let a = 2 * cell;
            let complete = self.bonds[a].len() == 4 && self.bonds[a + 1].len() == 4;
            if !complete {
                continue;
            }
            let mut red_a = phi(j, 0) * (step * j as f64);
            let mut red_b = phi(j, 1) * (step * j as f64 + self.tilt.e0());
            for &(shift, amp) in &couplings {
                red_a += amp * phi(j - shift, 1);
                red_b += amp.conj() * phi(j + shift, 0);
            }
            let wave = Complex64::from_polar(1.0, kappa * d * (r * n2 - q * n1) as f64);
            let scale = 1.0 + red_a.norm().max(red_b.norm());
            worst = worst
                .max((h_psi[a] - wave * red_a).norm() / scale)
                .max((h_psi[a + 1] - wave * red_b).norm() / scale);
        }
        worst
    }
}

/// Patch of `n1 x n2` cells; each side must hold at least `8 (|r| + |q|)`
/// cells.
///
/// The bond geometry is checked against the reduced chain at five
/// quasimomenta before the lattice is returned.
pub fn build_lattice(lattice: &LatticeSpec, tilt: &TiltSpec, n1: usize, n2: usize) -> Result<Lattice2D> {
    lattice.validate()?;
    let min = 8 * tilt.coupling_range();
    if n1 < min || n2 < min {
        return Err(invalid(format!("patch {n1} x {n2} is below the minimum {min} cells per side")));
    }
    let (r, q) = (tilt.r(), tilt.q());
    let d = tilt.d();
    let force = tilt.force();
    let n_sites = 2 * n1 * n2;
    let mut lat = Lattice2D {
        lattice: *lattice,
        tilt: *tilt,
        extent: (n1, n2),
        onsite: vec![0.0; n_sites],
        bonds: vec![Vec::with_capacity(4); n_sites],
        xi: vec![0.0; n_sites],
        eta: vec![0.0; n_sites],
        boundary: Vec::new(),
    };
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let (c1, c2) = lat.cell(i1, i2);
            let a = lat.site(c1, c2, 0).unwrap();
            let xi = d * (r * c1 + q * c2) as f64;
            let eta = d * (r * c2 - q * c1) as f64;
            lat.xi[a] = xi;
            lat.eta[a] = eta;
            lat.xi[a + 1] = xi + d * (r + q) as f64 / 2.0;
            lat.eta[a + 1] = eta + d * (r - q) as f64 / 2.0;
            lat.onsite[a] = force * lat.xi[a];
            lat.onsite[a + 1] = force * lat.xi[a + 1];
            let neighbours = [
                ((c1 - 1, c2), lattice.t1),
                ((c1, c2 - 1), lattice.t1),
                ((c1 - 1, c2 - 1), lattice.t2),
                ((c1, c2), lattice.t3),
            ];
            for ((m1, m2), t) in neighbours {
                if let Some(b) = lat.site(m1, m2, 1) {
                    lat.bonds[a].push((b, -t));
                    lat.bonds[b].push((a, -t));
                }
            }
            let edge = |i: usize, n: usize| i < BOUNDARY_CELLS || i + BOUNDARY_CELLS >= n;
            if edge(i1, n1) || edge(i2, n2) {
                lat.boundary.extend([a, a + 1]);
            }
        }
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    for k in 1..=5 {
        let kappa = tilt.zone_length() * (k as f64 * golden).fract();
        let residual = lat.plane_wave_residual(kappa);
        if residual > PLANE_WAVE_TOLERANCE {
            return Err(invalid(format!(
                "lattice fails the plane-wave check at kappa = {kappa}: residual {residual:e}"
            )));
        }
    }
    Ok(lat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PacketKind {
    SingleSite,
    /// Gaussian of r.m.s. radius `sigma` with transverse momentum `kappa0`.
    Gaussian { sigma: f64, kappa0: f64 },
}

#[derive(Debug, Clone)]
pub struct WavepacketState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl WavepacketState {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Normalised packet centred on the A site of cell `(0, 0)`.
pub fn initial_packet(lattice: &Lattice2D, kind: PacketKind) -> Result<WavepacketState> {
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); lattice.n_sites()];
    match kind {
        PacketKind::SingleSite => {
            amplitudes[lattice.site(0, 0, 0).unwrap()] = Complex64::new(1.0, 0.0);
        }
        PacketKind::Gaussian { sigma, kappa0 } => {
            if !(sigma > 0.0) || !kappa0.is_finite() {
                return Err(invalid(format!("bad gaussian packet sigma = {sigma}, kappa0 = {kappa0}")));
            }
            let cells = lattice.extent.0.min(lattice.extent.1) / 2 - BOUNDARY_CELLS;
            let room = cells as f64 * std::f64::consts::SQRT_2 * lattice.lattice.a;
            if 6.0 * sigma > room {
                return Err(invalid(format!(
                    "gaussian of width {sigma} needs {} of room, the patch offers {room}",
                    6.0 * sigma
                )));
            }
            for (i, amp) in amplitudes.iter_mut().enumerate() {
                let (x, y) = (lattice.xi[i], lattice.eta[i]);
                let envelope = (-(x * x + y * y) / (4.0 * sigma * sigma)).exp();
                *amp = Complex64::from_polar(envelope, kappa0 * y);
            }
            let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            amplitudes.iter_mut().for_each(|c| *c /= norm);
        }
    }
    Ok(WavepacketState { amplitudes, time: 0.0 })
}

/// Chebyshev expansion of `exp(-i H dt)` for a fixed lattice and step.
#[derive(Debug, Clone)]
pub struct ChebyshevPropagator {
    centre: f64,
    half_width: f64,
    dt: f64,
    coefficients: Vec<Complex64>,
}

impl ChebyshevPropagator {
    pub fn new(lattice: &Lattice2D, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        let (lo, hi) = lattice.spectral_bounds();
        let centre = (hi + lo) / 2.0;
        let half_width = ((hi - lo) / 2.0).max(1e-12) * 1.01;
        let z = half_width * dt;
        let reach = (z + 10.0 * z.cbrt() + 30.0).ceil() as usize;
        let bessel = table(reach, z);
        let mut coefficients = Vec::with_capacity(reach + 1);
        let mut phase = Complex64::new(1.0, 0.0);
        for (k, &j) in bessel.iter().enumerate() {
            let weight = if k == 0 { 1.0 } else { 2.0 };
            coefficients.push(phase * weight * j);
            phase *= Complex64::new(0.0, -1.0);
            if k as f64 > z && j.abs() < 1e-17 {
                break;
            }
        }
        Ok(Self { centre, half_width, dt, coefficients })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of Hamiltonian applications per step.
    pub fn terms(&self) -> usize {
        self.coefficients.len()
    }

    pub fn step(&self, lattice: &Lattice2D, psi: &mut [Complex64]) {
        let n = psi.len();
        let mut prev = psi.to_vec();
        let mut curr = vec![Complex64::new(0.0, 0.0); n];
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        lattice.apply_shifted(&prev, &mut curr, self.centre, self.half_width);
        let mut result: Vec<Complex64> = prev.iter().map(|v| v * self.coefficients[0]).collect();
        if let Some(&c1) = self.coefficients.get(1) {
            result.iter_mut().zip(&curr).for_each(|(r, v)| *r += v * c1);
        }
        for &c in self.coefficients.iter().skip(2) {
            lattice.apply_shifted(&curr, &mut next, self.centre, self.half_width);
            next.par_iter_mut()
                .zip(result.par_iter_mut())
                .zip(prev.par_iter())
                .with_min_len(1024)
                .for_each(|((nx, r), p)| {
                    *nx = 2.0 * *nx - p;
                    *r += *nx * c;
                });
            std::mem::swap(&mut prev, &mut curr);
            std::mem::swap(&mut curr, &mut next);
        }
        let global = Complex64::from_polar(1.0, -self.centre * self.dt);
        psi.iter_mut().zip(&result).for_each(|(p, r)| *p = r * global);
    }
}

/// Transverse and longitudinal widths sampled over a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadTrajectory {
    pub times: Vec<f64>,
    pub sigma_eta: Vec<f64>,
    pub sigma_xi: Vec<f64>,
    /// Least-squares slope of `sigma_eta` over `[0.3 T, 0.9 T]`.
    pub ballistic_velocity: f64,
    pub velocity_r2: f64,
    /// False when the linear fit has `R^2 < 0.99`.
    pub velocity_reliable: bool,
    pub norm_drift: f64,
    pub energy_drift: f64,
}

fn spread(weights: &[f64], coords: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mean: f64 = weights.iter().zip(coords).map(|(w, x)| w * x).sum::<f64>() / total;
    let var: f64 = weights.iter().zip(coords).map(|(w, x)| w * (x - mean).powi(2)).sum::<f64>() / total;
    var.max(0.0).sqrt()
}

fn expectation(lattice: &Lattice2D, psi: &[Complex64], scratch: &mut [Complex64]) -> f64 {
    lattice.apply(psi, scratch);
    psi.iter().zip(scratch.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Least-squares line through `(x, y)`: `(slope, R^2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { slope * sxy / syy };
    (slope, r2)
}

/// Evolves `state` to `state.time + t_final`, sampling the widths every
/// `t_final / 100`.
///
/// Each sampling interval is split into equal Chebyshev steps no longer
/// than `dt`. The run aborts if the norm drifts by more than `1e-6` or if
/// any amplitude in the outer two cells of the patch exceeds `1e-8`.
pub fn propagate(
    state: &mut WavepacketState,
    lattice: &Lattice2D,
    t_final: f64,
    dt: f64,
) -> Result<SpreadTrajectory> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(invalid(format!("propagation time must be positive, got {t_final}")));
    }
    if !(dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    if state.amplitudes.len() != lattice.n_sites() {
        return Err(invalid("state does not match the lattice"));
    }
    let interval = t_final / SAMPLES as f64;
    let substeps = (interval / dt).ceil().max(1.0) as usize;
    let propagator = ChebyshevPropagator::new(lattice, interval / substeps as f64)?;
    let mut scratch = vec![Complex64::new(0.0, 0.0); lattice.n_sites()];
    let norm0 = state.norm();
    let energy0 = expectation(lattice, &state.amplitudes, &mut scratch);
    let t0 = state.time;
    let mut times = Vec::with_capacity(SAMPLES + 1);
    let mut sigma_eta = Vec::with_capacity(SAMPLES + 1);
    let mut sigma_xi = Vec::with_capacity(SAMPLES + 1);
    let (mut norm_drift, mut energy_drift) = (0.0f64, 0.0f64);
    for sample in 0..=SAMPLES {
        if sample > 0 {
            for _ in 0..substeps {
                propagator.step(lattice, &mut state.amplitudes);
            }
            state.time = t0 + sample as f64 * interval;
        }
        let weights: Vec<f64> = state.amplitudes.iter().map(|c| c.norm_sqr()).collect();
        let norm: f64 = weights.iter().sum();
        norm_drift = norm_drift.max((norm - norm0).abs());
        if norm_drift > NORM_TOLERANCE {
            return Err(Error::NormDrift { time: state.time, drift: norm_drift });
        }
        let edge = lattice.boundary.iter().map(|&i| weights[i].sqrt()).fold(0.0, f64::max);
        if edge > BOUNDARY_TOLERANCE {
            return Err(Error::BoundaryContamination { time: state.time, amplitude: edge });
        }
        let energy = expectation(lattice, &state.amplitudes, &mut scratch);
        energy_drift = energy_drift.max((energy - energy0).abs());
        times.push(state.time);
        sigma_eta.push(spread(&weights, &lattice.eta));
        sigma_xi.push(spread(&weights, &lattice.xi));
    }
    let window: Vec<usize> = (0..times.len())
        .filter(|&i| {
            let t = times[i] - t0;
            t >= 0.3 * t_final - 1e-12 && t <= 0.9 * t_final + 1e-12
        })
        .collect();
    let wt: Vec<f64> = window.iter().map(|&i| times[i]).collect();
    let ws: Vec<f64> = window.iter().map(|&i| sigma_eta[i]).collect();
    let (ballistic_velocity, velocity_r2) = linear_fit(&wt, &ws);
    Ok(SpreadTrajectory {
        times,
        sigma_eta,
        sigma_xi,
        ballistic_velocity,
        velocity_r2,
        velocity_reliable: velocity_r2 >= 0.99,
        norm_drift,
        energy_drift,
    })
}
