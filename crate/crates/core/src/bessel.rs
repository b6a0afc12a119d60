//! Integer-order Bessel functions of the first kind and their positive roots.
//!
//! Values come from Miller's backward recurrence normalised with
//! `J_0 + 2 sum_k J_2k = 1`; arguments `|z| <= 1` use the ascending series.

use std::f64::consts::FRAC_PI_4;

use crate::error::{invalid, Result};

const RESCALE_THRESHOLD: f64 = 1e250;
const RESCALE_FACTOR: f64 = 1e-250;

/// `J_n(z)` for any integer order and finite real argument.
pub fn bessel_j(order: i64, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(invalid(format!("Bessel argument must be finite, got {z}")));
    }
    Ok(jn(order, z))
}

/// `J_0(z), ..., J_max_order(z)` from a single recurrence pass.
pub fn bessel_j_table(max_order: usize, z: f64) -> Result<Vec<f64>> {
    if !z.is_finite() {
        return Err(invalid(format!("Bessel argument must be finite, got {z}")));
    }
    Ok(table(max_order, z))
}

/// Unchecked `J_n(z)`; `z` must be finite.
pub(crate) fn jn(order: i64, z: f64) -> f64 {
    let n = order.unsigned_abs() as usize;
    let mut value = *table(n, z).last().expect("table has n + 1 entries");
    if order < 0 && n % 2 == 1 {
        value = -value;
    }
    value
}

/// Signed-order lookup into a table produced by [`table`].
pub(crate) fn lookup(table: &[f64], order: i64) -> f64 {
    let n = order.unsigned_abs() as usize;
    match table.get(n) {
        Some(&v) if order < 0 && n % 2 == 1 => -v,
        Some(&v) => v,
        None => 0.0,
    }
}

pub(crate) fn table(max_order: usize, z: f64) -> Vec<f64> {
    let x = z.abs();
    let mut values = if x == 0.0 {
        let mut v = vec![0.0; max_order + 1];
        v[0] = 1.0;
        v
    } else if x <= 1.0 {
        (0..=max_order).map(|n| ascending_series(n, x)).collect()
    } else {
        miller(max_order, x)
    };
    if z < 0.0 {
        for (n, v) in values.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
    values
}

fn ascending_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
        if term == 0.0 {
            return 0.0;
        }
    }
    let quarter_sq = -half * half;
    let mut sum = term;
    for k in 1..60 {
        term *= quarter_sq / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(max_order: usize, x: f64) -> Vec<f64> {
    let reach = (max_order as f64).max(x);
    let mut start = (reach + 8.0 * reach.cbrt() + 30.0).ceil() as usize;
    start += start % 2;

    let mut values = vec![0.0; max_order + 1];
    let mut next = 0.0;
    let mut current = 1.0;
    let mut norm = 0.0;
    let inv_x = 1.0 / x;
    for k in (1..=start).rev() {
        if k <= max_order {
            values[k] = current;
        }
        if k % 2 == 0 {
            norm += 2.0 * current;
        }
        let previous = 2.0 * k as f64 * inv_x * current - next;
        next = current;
        current = previous;
        if current.abs() > RESCALE_THRESHOLD {
            current *= RESCALE_FACTOR;
            next *= RESCALE_FACTOR;
            norm *= RESCALE_FACTOR;
            for v in values.iter_mut() {
                *v *= RESCALE_FACTOR;
            }
        }
    }
    values[0] = current;
    norm += current;
    let scale = 1.0 / norm;
    values.iter_mut().for_each(|v| *v *= scale);
    values
}

/// The `k`-th positive root `j_{n,k}` of `J_n`.
///
/// Roots are bracketed by sign changes on a grid of step pi/4 that starts at
/// `z = n` (below the first root) and then refined by bisection to full
/// double precision.
pub fn bessel_root(order: u32, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(invalid("Bessel roots are counted from k = 1"));
    }
    let n = order as i64;
    let f = |z: f64| jn(n, z);
    let mut lo = order as f64;
    let mut f_lo = if order == 0 { 1.0 } else { f(lo) };
    let mut found = 0;
    loop {
        let hi = lo + FRAC_PI_4;
        let f_hi = f(hi);
        if f_hi == 0.0 {
            found += 1;
            if found == k {
                return Ok(hi);
            }
            // step past the exact zero so the next bracket starts cleanly
            lo = hi + 1e-9;
            f_lo = f(lo);
            continue;
        }
        if f_lo.signum() != f_hi.signum() {
            found += 1;
            if found == k {
                return Ok(bisect(f, lo, hi, f_lo));
            }
        }
        lo = hi;
        f_lo = f_hi;
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
