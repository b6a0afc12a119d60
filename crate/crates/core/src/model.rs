//! Physical parameters of the tilted two-sublattice square lattice and the
//! geometry of the frame rotated along the static force.
//!
//! The force direction is given by a pair of integers `(r, q)` with
//! `F_x / F_y = r / q` in the frame of the lattice primary axes. In the
//! rotated frame the sites sit on lines `xi = d * j` with
//! `d = sqrt(2) a / sqrt(r^2 + q^2)`, and the B sublattice carries an extra
//! offset energy `E0 = F d (r + q) / 2`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Hopping amplitudes and period of the two-sublattice square lattice.
///
/// `t3 == t2` is the simple square lattice, `t3 == 0` the honeycomb-like
/// lattice and `t3 == -t2` the pi-flux lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    #[serde(default = "unit_period")]
    pub a: f64,
}

fn unit_period() -> f64 {
    1.0
}

impl LatticeSpec {
    /// Lattice with unit period.
    pub fn new(t1: f64, t2: f64, t3: f64) -> Result<Self> {
        Self::with_period(t1, t2, t3, 1.0)
    }

    pub fn with_period(t1: f64, t2: f64, t3: f64, a: f64) -> Result<Self> {
        let spec = Self { t1, t2, t3, a };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(invalid(format!("lattice period must be positive, got {}", self.a)));
        }
        if ![self.t1, self.t2, self.t3].iter().all(|t| t.is_finite()) {
            return Err(invalid("hopping amplitudes must be finite"));
        }
        Ok(())
    }

    /// `|t2 - t3|`, the strength of the sublattice asymmetry that drives
    /// the dispersion of the Stark bands.
    pub fn gamma(&self) -> f64 {
        (self.t2 - self.t3).abs()
    }

    /// Sum of absolute hopping amplitudes.
    pub fn hopping_scale(&self) -> f64 {
        self.t1.abs() + self.t2.abs() + self.t3.abs()
    }
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self { t1: 1.0, t2: 0.5, t3: 0.25, a: 1.0 }
    }
}

/// Orientation of the force relative to the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrientationClass {
    Generic,
    /// `r == q`, force along the diagonal `(1, 1)`.
    Diagonal,
    /// `r == -q`, force along `(1, -1)`.
    AntiDiagonal,
}

/// Tilt direction, force magnitude and the derived rotated-frame geometry.
///
/// Constructed only through [`make_tilt`], which reduces `(r, q)` to coprime
/// form with `q > 0` (or `q == 0`, `r > 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltSpec {
    r: i64,
    q: i64,
    force: f64,
    d: f64,
    e0: f64,
    theta: f64,
}

impl TiltSpec {
    pub fn r(&self) -> i64 {
        self.r
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    /// Force magnitude `F`.
    pub fn force(&self) -> f64 {
        self.force
    }

    /// Spacing `d` of the lines of constant Stark energy.
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Offset energy `E0 = F d (r + q) / 2` of the B sublattice.
    pub fn e0(&self) -> f64 {
        self.e0
    }

    /// Rotation angle `theta = arctan(r / q)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `F d`, the Stark energy step between neighbouring chain sites.
    pub fn stark_step(&self) -> f64 {
        self.force * self.d
    }

    /// Largest coupling range `|r| + |q|` of the reduced chain.
    pub fn coupling_range(&self) -> usize {
        (self.r.abs() + self.q.abs()) as usize
    }

    /// `r^2 + q^2`.
    pub fn norm_sq(&self) -> i64 {
        self.r * self.r + self.q * self.q
    }

    /// Same direction and lattice, different force magnitude.
    pub fn with_force(&self, force: f64, lattice: &LatticeSpec) -> Result<TiltSpec> {
        make_tilt(self.r, self.q, force, lattice)
    }

    /// True when `(r + q) / 2` is an integer.
    pub fn has_integer_half_sum(&self) -> bool {
        (self.r + self.q).rem_euclid(2) == 0
    }

    /// Spacing `F d g / 2`, `g = gcd(r + q, |r - q|)`, of the flat ladders of
    /// the simple square lattice. This is `F a / sqrt(r'^2 + q'^2)` for the
    /// direction `(r', q')` measured along the simple-lattice axes, which are
    /// rotated by pi/4.
    pub fn flat_ladder_spacing(&self) -> f64 {
        let g = gcd((self.r + self.q).abs(), (self.r - self.q).abs());
        self.force * self.d * g as f64 / 2.0
    }

    /// Period `2 pi / ((r^2 + q^2) d)` in kappa of the whole spectrum.
    ///
    /// Shifting kappa by this amount is undone by the chain gauge
    /// transformation `psi_j -> exp(i phi j) psi_j` with `s q = -r` and
    /// `s r = q` modulo `r^2 + q^2`, `phi = 2 pi s / (r^2 + q^2)`.
    pub fn spectral_period(&self) -> f64 {
        2.0 * PI / (self.norm_sq() as f64 * self.d)
    }

    /// Length `2 pi / d` of the kappa interval sampled by [`kappa_grid`].
    pub fn zone_length(&self) -> f64 {
        2.0 * PI / self.d
    }
}

pub(crate) fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Builds the tilt geometry for direction `(r, q)` and force magnitude
/// `force`.
///
/// `(r, q)` is reduced to coprime form and its sign fixed so that `q > 0`,
/// or `r > 0` when `q == 0`. Flipping both signs reverses the force, which
/// leaves the spectrum unchanged.
pub fn make_tilt(r: i64, q: i64, force: f64, lattice: &LatticeSpec) -> Result<TiltSpec> {
    lattice.validate()?;
    if !(force.is_finite() && force > 0.0) {
        return Err(invalid(format!("force magnitude must be positive, got {force}")));
    }
    if r == 0 && q == 0 {
        return Err(invalid("tilt direction (0, 0) is undefined"));
    }
    let g = gcd(r, q);
    let (mut r, mut q) = (r / g, q / g);
    if q < 0 || (q == 0 && r < 0) {
        r = -r;
        q = -q;
    }
    let norm = ((r * r + q * q) as f64).sqrt();
    let d = SQRT_2 * lattice.a / norm;
    Ok(TiltSpec {
        r,
        q,
        force,
        d,
        e0: force * d * (r + q) as f64 / 2.0,
        theta: (r as f64).atan2(q as f64),
    })
}

pub fn classify_orientation(tilt: &TiltSpec) -> OrientationClass {
    if tilt.r == tilt.q {
        OrientationClass::Diagonal
    } else if tilt.r == -tilt.q {
        OrientationClass::AntiDiagonal
    } else {
        OrientationClass::Generic
    }
}

/// `n_points` uniformly spaced quasimomenta covering `[0, 2 pi / d)`.
pub fn kappa_grid(tilt: &TiltSpec, n_points: usize) -> Result<Vec<f64>> {
    uniform_grid(tilt.zone_length(), n_points)
}

/// `n_points` uniformly spaced quasimomenta covering one spectral period
/// `[0, 2 pi / ((r^2 + q^2) d))`.
pub fn spectral_period_grid(tilt: &TiltSpec, n_points: usize) -> Result<Vec<f64>> {
    uniform_grid(tilt.spectral_period(), n_points)
}

fn uniform_grid(length: f64, n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(invalid(format!("kappa grid needs at least 2 points, got {n_points}")));
    }
    let step = length / n_points as f64;
    Ok((0..n_points).map(|i| i as f64 * step).collect())
}
