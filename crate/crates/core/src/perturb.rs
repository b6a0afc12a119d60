//! Perturbative dispersion of the Wannier–Stark ladders.
//!
//! For a simple square lattice (`t3 = t2`) the ladders are flat. A nonzero
//! `t3 - t2` splits each pair of ladders by `±lambda(kappa)` with
//! `lambda^2 = |<X>|^2 + B^2 / F^2`, where `<X>` is a Bessel series in
//! `z1 = 8 t1 / (F d (r - q))` and `z2 = 4 (t2 + t3) / (F d (r + q))` and
//! `B` is the second-order mean. Directions `(1, 1)` and `(-1, 1)` use
//! closed forms instead.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_root, lookup, table};
use crate::error::{invalid, Error, Result};
use crate::model::{classify_orientation, gcd, kappa_grid, LatticeSpec, OrientationClass, TiltSpec};
use crate::spectrum::DispersionCurve;

/// Default truncation in powers of `1/F`.
pub const DEFAULT_MAX_ORDER: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// One term `J_m(z1) J_n(z2)` of the first-order series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PerturbTerm {
    pub n: i64,
    pub m: i64,
    pub bessel_m_index: u32,
    pub bessel_n_index: u32,
    /// Multiplier `K` of `kappa d` in the cos/sin factor.
    pub harmonic: i64,
    /// Parity of `n + m`: odd terms carry `cos`, even terms `-i sin`.
    pub parity: Parity,
    pub order: u32,
    /// Sign from reducing `J_{-k} = (-1)^k J_k` on both factors.
    pub amplitude_sign: i8,
}

impl PerturbTerm {
    /// `J_m(z1) J_n(z2)` through nonnegative-order tables.
    fn bessel_product(&self, j1: &[f64], j2: &[f64]) -> f64 {
        f64::from(self.amplitude_sign)
            * j1[self.bessel_m_index as usize]
            * j2[self.bessel_n_index as usize]
    }
}

fn reflection_sign(index: i64) -> i8 {
    if index < 0 && index % 2 != 0 {
        -1
    } else {
        1
    }
}

fn require_generic(tilt: &TiltSpec, operation: &'static str) -> Result<()> {
    match classify_orientation(tilt) {
        OrientationClass::Generic => Ok(()),
        orientation => Err(Error::UnsupportedOrientation { operation, orientation }),
    }
}

/// Spacing-`p` member of the flat ladder, `F d g p / 2` with
/// `g = gcd(r + q, |r - q|)`.
pub fn flat_ladder(tilt: &TiltSpec, p: i64) -> f64 {
    tilt.flat_ladder_spacing() * p as f64
}

/// All integer solutions of `(r - q) m = -(r + q)(1 + n)` with
/// `|n| + |m| <= max_order`, sorted by order and then by `|K|`.
pub fn enumerate_terms(tilt: &TiltSpec, max_order: u32) -> Result<Vec<PerturbTerm>> {
    require_generic(tilt, "first-order series")?;
    let (r, q) = (tilt.r(), tilt.q());
    let (diff, sum) = (r - q, r + q);
    let budget = i64::from(max_order);
    let mut terms = Vec::new();
    for n in -budget..=budget {
        let numerator = -sum * (1 + n);
        if numerator % diff != 0 {
            continue;
        }
        let m = numerator / diff;
        let order = n.abs() + m.abs();
        if order > budget {
            continue;
        }
        let harmonic_num = tilt.norm_sq() * (1 + n);
        debug_assert_eq!(harmonic_num % diff, 0);
        terms.push(PerturbTerm {
            n,
            m,
            bessel_m_index: m.unsigned_abs() as u32,
            bessel_n_index: n.unsigned_abs() as u32,
            harmonic: harmonic_num / diff,
            parity: if (n + m) % 2 == 0 { Parity::Even } else { Parity::Odd },
            order: order as u32,
            amplitude_sign: reflection_sign(m) * reflection_sign(n),
        });
    }
    terms.sort_by_key(|t| (t.order, t.harmonic.abs(), t.n));
    Ok(terms)
}

/// Bessel arguments `(z1, z2)` of the generic series.
pub fn bessel_arguments(lattice: &LatticeSpec, tilt: &TiltSpec) -> (f64, f64) {
    let fd = tilt.force() * tilt.d();
    let z1 = 8.0 * lattice.t1 / (fd * (tilt.r() - tilt.q()) as f64);
    let z2 = 4.0 * (lattice.t2 + lattice.t3) / (fd * (tilt.r() + tilt.q()) as f64);
    (z1, z2)
}

/// First-order series prepared for repeated evaluation at one force.
#[derive(Debug, Clone)]
pub struct FirstOrderSeries {
    terms: Vec<PerturbTerm>,
    coefficients: Vec<f64>,
    d: f64,
}

impl FirstOrderSeries {
    pub fn new(lattice: &LatticeSpec, tilt: &TiltSpec, max_order: u32) -> Result<Self> {
        let terms = enumerate_terms(tilt, max_order)?;
        let (z1, z2) = bessel_arguments(lattice, tilt);
        let reach = max_order as usize;
        let (j1, j2) = (table(reach, z1), table(reach, z2));
        let gap = lattice.t3 - lattice.t2;
        let coefficients = terms.iter().map(|t| -gap * t.bessel_product(&j1, &j2)).collect();
        Ok(Self { terms, coefficients, d: tilt.d() })
    }

    pub fn terms(&self) -> &[PerturbTerm] {
        &self.terms
    }

    /// Contribution of each term at `kappa`, in term order.
    pub fn term_values(&self, kappa: f64) -> Vec<Complex64> {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .map(|(t, &c)| {
                let phase = t.harmonic as f64 * kappa * self.d;
                match t.parity {
                    Parity::Odd => Complex64::new(c * phase.cos(), 0.0),
                    Parity::Even => Complex64::new(0.0, c * phase.sin()),
                }
            })
            .collect()
    }

    pub fn evaluate(&self, kappa: f64) -> Complex64 {
        self.term_values(kappa).into_iter().sum()
    }

    /// True when every term has odd parity, so that `<X>` is real.
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|t| t.parity == Parity::Odd)
    }
}

/// First-order mean `<X>(kappa)` truncated at `max_order`.
pub fn mean_x(lattice: &LatticeSpec, tilt: &TiltSpec, kappa: f64, max_order: u32) -> Result<Complex64> {
    Ok(FirstOrderSeries::new(lattice, tilt, max_order)?.evaluate(kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SecondOrderKind {
    B1,
    B3,
}

/// One quadruple `(n, m, n', m')` of the second-order mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SecondOrderTerm {
    pub n: i64,
    pub m: i64,
    pub n_prime: i64,
    pub m_prime: i64,
    pub nu_plus: i64,
    pub nu_minus: i64,
    pub mu_plus: i64,
    pub mu_minus: i64,
    pub kind: SecondOrderKind,
}

impl SecondOrderTerm {
    /// Integer `w` such that the term oscillates as `cos(w kappa d / 2)`.
    pub fn frequency(&self, tilt: &TiltSpec) -> i64 {
        let (_, _, mu_plus_p, mu_minus_p) = nu_mu(tilt, self.n_prime, self.m_prime);
        match self.kind {
            SecondOrderKind::B1 => self.mu_plus - mu_minus_p,
            SecondOrderKind::B3 => self.mu_plus - mu_plus_p,
        }
    }
}

/// `(nu_plus, nu_minus, mu_plus, mu_minus)` of `(n, m)`.
fn nu_mu(tilt: &TiltSpec, n: i64, m: i64) -> (i64, i64, i64, i64) {
    let (diff, sum) = (tilt.r() - tilt.q(), tilt.r() + tilt.q());
    (
        m * diff + (n + 1) * sum,
        m * diff + (n - 1) * sum,
        (n + 1) * diff - m * sum,
        (n - 1) * diff - m * sum,
    )
}

/// All quadruples of the `b1` and `b3` sums with
/// `|n| + |m| + |n'| + |m'| <= max_order`.
pub fn second_order_terms(tilt: &TiltSpec, max_order: u32) -> Result<Vec<SecondOrderTerm>> {
    require_generic(tilt, "second-order mean")?;
    let budget = i64::from(max_order);
    let pairs: Vec<(i64, i64)> = (-budget..=budget)
        .flat_map(|n| (-budget..=budget).map(move |m| (n, m)))
        .filter(|(n, m)| n.abs() + m.abs() <= budget)
        .collect();
    let mut terms = Vec::new();
    for &(n, m) in &pairs {
        let (nu_plus, nu_minus, mu_plus, mu_minus) = nu_mu(tilt, n, m);
        if nu_plus == 0 {
            continue;
        }
        for &(np, mp) in &pairs {
            if n.abs() + m.abs() + np.abs() + mp.abs() > budget {
                continue;
            }
            let (nu_plus_p, nu_minus_p, _, _) = nu_mu(tilt, np, mp);
            let base = SecondOrderTerm {
                n,
                m,
                n_prime: np,
                m_prime: mp,
                nu_plus,
                nu_minus,
                mu_plus,
                mu_minus,
                kind: SecondOrderKind::B1,
            };
            if nu_plus == nu_minus_p {
                terms.push(base);
            }
            if nu_plus == nu_plus_p && (n + np + m + mp).rem_euclid(2) == 1 {
                terms.push(SecondOrderTerm { kind: SecondOrderKind::B3, ..base });
            }
        }
    }
    Ok(terms)
}

/// Second-order mean prepared as a cosine series in `kappa d / 2`.
///
/// Every term is a real cosine, so the assembled mean is real by
/// construction.
#[derive(Debug, Clone)]
pub struct SecondOrderSeries {
    /// Coefficient per nonnegative frequency `w` of `cos(w kappa d / 2)`.
    harmonics: Vec<(i64, f64)>,
    d: f64,
}

impl SecondOrderSeries {
    pub fn new(lattice: &LatticeSpec, tilt: &TiltSpec, max_order: u32) -> Result<Self> {
        let terms = second_order_terms(tilt, max_order)?;
        let (z1, z2) = bessel_arguments(lattice, tilt);
        let reach = max_order as usize;
        let (j1, j2) = (table(reach, z1), table(reach, z2));
        let gap = lattice.t3 - lattice.t2;
        let mut harmonics: BTreeMap<i64, f64> = BTreeMap::new();
        for t in &terms {
            let product = lookup(&j1, t.m) * lookup(&j2, t.n) * lookup(&j1, t.m_prime) * lookup(&j2, t.n_prime);
            let magnitude = gap * gap * product / (tilt.d() * t.nu_plus as f64);
            let signed = match t.kind {
                SecondOrderKind::B1 => -magnitude,
                SecondOrderKind::B3 => magnitude,
            };
            *harmonics.entry(t.frequency(tilt).abs()).or_default() += signed;
        }
        Ok(Self { harmonics: harmonics.into_iter().collect(), d: tilt.d() })
    }

    pub fn evaluate(&self, kappa: f64) -> f64 {
        let half = kappa * self.d / 2.0;
        self.harmonics.iter().map(|&(w, c)| c * (w as f64 * half).cos()).sum()
    }
}

/// Second-order mean `B(kappa)` truncated at `max_order`.
pub fn second_order_mean(lattice: &LatticeSpec, tilt: &TiltSpec, kappa: f64, max_order: u32) -> Result<f64> {
    Ok(SecondOrderSeries::new(lattice, tilt, max_order)?.evaluate(kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Generic,
    Diagonal,
    AntiDiagonal,
}

/// The `±lambda(kappa)` pair about the ladder reference energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticDispersion {
    pub kappas: Vec<f64>,
    pub e_plus: Vec<f64>,
    pub e_minus: Vec<f64>,
    /// Highest power of `1/F` kept; 0 for the closed forms.
    pub order_used: u32,
    pub branch_kind: BranchKind,
}

/// Analytic `±lambda` on `grid`.
///
/// In the generic case `lambda = sqrt(|<X>|^2 + B^2 / F^2)`. When `<X>` is
/// real (odd `r + q`) the second-order mean vanishes and `lambda` carries
/// the sign of `<X>`, so that a branch stays smooth where `<X>` changes
/// sign. Otherwise the positive root is used.
pub fn dispersion_analytic(
    lattice: &LatticeSpec,
    tilt: &TiltSpec,
    grid: &[f64],
    max_order: u32,
) -> Result<AnalyticDispersion> {
    lattice.validate()?;
    if grid.is_empty() {
        return Err(invalid("empty kappa grid"));
    }
    let (e_plus, order_used, branch_kind) = match classify_orientation(tilt) {
        OrientationClass::Generic => {
            let first = FirstOrderSeries::new(lattice, tilt, max_order)?;
            let second = SecondOrderSeries::new(lattice, tilt, max_order)?;
            let signed = first.is_real();
            let f = tilt.force();
            let values: Vec<f64> = grid
                .iter()
                .map(|&k| {
                    let x = first.evaluate(k);
                    let b = second.evaluate(k);
                    let lambda = (x.norm_sqr() + (b / f).powi(2)).sqrt();
                    if signed && x.re < 0.0 {
                        -lambda
                    } else {
                        lambda
                    }
                })
                .collect();
            (values, max_order, BranchKind::Generic)
        }
        OrientationClass::Diagonal => {
            let z = 2.0 * (lattice.t2 + lattice.t3) / tilt.stark_step();
            let j1 = table(1, z)[1];
            let gap = lattice.t2 - lattice.t3;
            let values: Vec<f64> = grid
                .iter()
                .map(|&k| {
                    let c = (k * tilt.d()).cos();
                    ((gap * j1).powi(2) + 4.0 * (lattice.t1 * c).powi(2)).sqrt()
                })
                .collect();
            (values, 0, BranchKind::Diagonal)
        }
        OrientationClass::AntiDiagonal => {
            let z = 4.0 * lattice.t1 / tilt.stark_step();
            let j0 = table(0, z)[0];
            let (gap, total) = (lattice.t2 - lattice.t3, lattice.t2 + lattice.t3);
            let values: Vec<f64> = grid
                .iter()
                .map(|&k| {
                    let (s, c) = (k * tilt.d()).sin_cos();
                    ((gap * j0 * s).powi(2) + (total * c).powi(2)).sqrt()
                })
                .collect();
            (values, 0, BranchKind::AntiDiagonal)
        }
    };
    let e_minus = e_plus.iter().map(|e| -e).collect();
    Ok(AnalyticDispersion { kappas: grid.to_vec(), e_plus, e_minus, order_used, branch_kind })
}

/// Peak-to-peak spread of the `e_plus` branch.
pub fn width_analytic(disp: &AnalyticDispersion) -> f64 {
    let (lo, hi) = crate::spectrum::min_max(&disp.e_plus);
    if disp.e_plus.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Smallest truncation order whose series contains at least `count` terms.
pub fn order_for_terms(tilt: &TiltSpec, count: usize) -> Result<u32> {
    require_generic(tilt, "first-order series")?;
    let mut order = 1;
    loop {
        if enumerate_terms(tilt, order)?.len() >= count {
            return Ok(order);
        }
        if order > 64 {
            return Err(invalid(format!("fewer than {count} terms below order 64")));
        }
        order += 1;
    }
}

/// Agreement between an analytic branch pair and a tracked exact band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchComparison {
    /// Largest pointwise deviation after removing both kappa-averages.
    pub max_deviation: f64,
    /// +1 when `e_plus` matched, -1 for `e_minus`.
    pub branch_sign: i8,
}

/// Aligns both curves on their kappa-average and keeps whichever branch
/// deviates least.
pub fn compare_with_numeric(analytic: &AnalyticDispersion, numeric: &DispersionCurve) -> Result<BranchComparison> {
    if analytic.kappas.len() != numeric.kappas.len()
        || analytic.kappas.iter().zip(&numeric.kappas).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(invalid("analytic and numeric curves use different kappa grids"));
    }
    let centred = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - mean).collect::<Vec<_>>()
    };
    let exact = centred(&numeric.energies);
    let deviation = |branch: &[f64]| {
        centred(branch).iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let plus = deviation(&analytic.e_plus);
    let minus = deviation(&analytic.e_minus);
    Ok(if plus <= minus {
        BranchComparison { max_deviation: plus, branch_sign: 1 }
    } else {
        BranchComparison { max_deviation: minus, branch_sign: -1 }
    })
}

/// Forces of the first `k_max` band collapses, in decreasing order.
///
/// With `t3 = -t2` only `n = 0` terms survive and the leading
/// kappa-dependent term is `J_{n*}(z1) cos(K kappa d)`, so the collapses sit
/// at the zeros `z1 = j_{n*,k}`. Otherwise the analytic width is scanned
/// over a logarithmic force grid and its deep minima are refined by golden
/// section.
pub fn collapse_predict(lattice: &LatticeSpec, tilt: &TiltSpec, k_max: u32) -> Result<Vec<f64>> {
    lattice.validate()?;
    require_generic(tilt, "collapse prediction")?;
    if k_max == 0 {
        return Ok(Vec::new());
    }
    let dispersive = enumerate_terms(tilt, DEFAULT_MAX_ORDER)?.into_iter().filter(|t| t.harmonic != 0);
    let pi_flux = (lattice.t3 + lattice.t2).abs() <= 1e-14 * lattice.hopping_scale();
    if pi_flux {
        let leading = dispersive
            .filter(|t| t.n == 0)
            .min_by_key(|t| t.order)
            .ok_or(Error::NoDispersiveTerm { max_order: DEFAULT_MAX_ORDER })?;
        let scale = 8.0 * lattice.t1.abs() / (tilt.d() * (tilt.r() - tilt.q()).abs() as f64);
        return (1..=k_max)
            .map(|k| Ok(scale / bessel_root(leading.bessel_m_index, k)?))
            .collect();
    }
    if dispersive.count() == 0 {
        return Err(Error::NoDispersiveTerm { max_order: DEFAULT_MAX_ORDER });
    }
    scan_collapses(lattice, tilt, k_max)
}

fn scan_collapses(lattice: &LatticeSpec, tilt: &TiltSpec, k_max: u32) -> Result<Vec<f64>> {
    let width_at = |force: f64| -> Result<f64> {
        let t = tilt.with_force(force, lattice)?;
        let grid = kappa_grid(&t, 128)?;
        Ok(width_analytic(&dispersion_analytic(lattice, &t, &grid, DEFAULT_MAX_ORDER)?))
    };
    // every zero of J_m(z1) with m >= 1 lies at z1 > 2, so no collapse is
    // found above 4 t1 / (d |r - q|)
    let hi = 8.0 * lattice.hopping_scale() / (tilt.d() * (tilt.r() - tilt.q()).abs() as f64);
    let lo = hi / 40.0;
    let samples = 400;
    let forces: Vec<f64> = (0..=samples)
        .map(|i| hi * (lo / hi).powf(i as f64 / samples as f64))
        .collect();
    let widths = forces.iter().map(|&f| width_at(f)).collect::<Result<Vec<_>>>()?;
    let mut found = Vec::new();
    for i in 1..samples {
        if widths[i] > widths[i - 1] || widths[i] > widths[i + 1] {
            continue;
        }
        let left_peak = widths[..i].iter().cloned().fold(0.0, f64::max);
        let right_peak = widths[i..].iter().cloned().fold(0.0, f64::max);
        let (f, w) = golden_min(&width_at, forces[i + 1], forces[i - 1], 1e-6)?;
        if w <= 0.1 * left_peak.min(right_peak) {
            found.push(f);
        }
        if found.len() == k_max as usize {
            break;
        }
    }
    Ok(found)
}

/// Golden-section minimum of `f` on `[lo, hi]`, returned as `(x, f(x))`.
pub(crate) fn golden_min(
    f: &dyn Fn(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let x = (lo + hi) / 2.0;
    Ok((x, f(x)?))
}

/// Ladder spacing divisor `g = gcd(r + q, |r - q|)`.
pub fn ladder_gcd(tilt: &TiltSpec) -> i64 {
    gcd(tilt.r() + tilt.q(), (tilt.r() - tilt.q()).abs())
}
