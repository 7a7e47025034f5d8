//! Adaptive trapezoid quadrature of even integrands on nested uniform lattices.
//!
//! For smooth, rapidly decaying integrands the trapezoid rule converges
//! geometrically, so the change between successive halvings of the step is a
//! reliable error estimate.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Number of lattice points per parallel work unit; fixed so sums are
/// reproducible bit for bit regardless of thread count.
pub const CHUNK: usize = 256;

/// Nested-lattice trapezoid rule on [0, omega_max] for even integrands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvenRule {
    pub omega_max: f64,
    pub initial_step: f64,
    /// Target relative change between successive levels.
    pub rel_tol: f64,
    /// Largest relative change accepted when the level cap is reached.
    pub accept_tol: f64,
    pub max_levels: usize,
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureInfo {
    pub step: f64,
    pub points: usize,
    pub rel_change: f64,
}

/// Estimates ∫_{−∞}^{∞} f(ω) dω = 2∫_0^{ω_max} f(ω) dω for an even vector-valued f.
///
/// `floor` gives, per component, an absolute scale below which differences are
/// not resolved (useful for components that vanish by symmetry).
pub fn integrate_even<const N: usize, F>(
    f: F,
    rule: &EvenRule,
    floor: [f64; N],
) -> Result<([f64; N], QuadratureInfo)>
where
    F: Fn(f64) -> Result<[f64; N]> + Sync,
{
    if !(rule.initial_step > 0.0 && rule.omega_max > 0.0) {
        return Err(Error::PreconditionViolated("quadrature step and range must be positive".into()));
    }
    let j0 = (rule.omega_max / rule.initial_step).ceil() as usize;
    // Raw sum: f(0) + 2 Σ_{ω>0} f(ω); the integral is step * raw.
    let mut raw = [0.0; N];
    let first = sum_points(&f, j0 + 1, |j| j as f64 * rule.initial_step, |j| if j == 0 { 1.0 } else { 2.0 })?;
    add(&mut raw, &first);
    let mut step = rule.initial_step;
    let mut points = j0 + 1;
    let mut prev = scale(&raw, step);
    let mut rel_change = f64::INFINITY;
    for _ in 0..rule.max_levels {
        let half = 0.5 * step;
        let count = j0 * (points_per_level(step, rule.initial_step));
        let new = sum_points(&f, count, |i| (2 * i + 1) as f64 * half, |_| 2.0)?;
        add(&mut raw, &new);
        points += count;
        step = half;
        let cur = scale(&raw, step);
        rel_change = relative_change(&prev, &cur, &floor);
        prev = cur;
        if rel_change <= rule.rel_tol {
            return Ok((cur, QuadratureInfo { step, points, rel_change }));
        }
    }
    if rel_change <= rule.accept_tol {
        return Ok((prev, QuadratureInfo { step, points, rel_change }));
    }
    Err(Error::QuadratureNotConverged {
        rel_change,
        divisions: (rule.initial_step / step).round() as usize,
    })
}

fn points_per_level(step: f64, initial: f64) -> usize {
    (initial / step).round() as usize
}

fn sum_points<const N: usize, F, X, W>(f: &F, count: usize, x: X, w: W) -> Result<[f64; N]>
where
    F: Fn(f64) -> Result<[f64; N]> + Sync,
    X: Fn(usize) -> f64 + Sync,
    W: Fn(usize) -> f64 + Sync,
{
    let chunks = count.div_ceil(CHUNK);
    let partial: Vec<Result<[f64; N]>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = [0.0; N];
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                let v = f(x(i))?;
                let wi = w(i);
                for k in 0..N {
                    acc[k] += wi * v[k];
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = [0.0; N];
    for p in partial {
        add(&mut total, &p?);
    }
    Ok(total)
}

fn add<const N: usize>(a: &mut [f64; N], b: &[f64; N]) {
    for k in 0..N {
        a[k] += b[k];
    }
}

fn scale<const N: usize>(a: &[f64; N], s: f64) -> [f64; N] {
    let mut out = *a;
    for v in out.iter_mut() {
        *v *= s;
    }
    out
}

/// Largest componentwise relative change, with per-component absolute floors.
pub fn relative_change<const N: usize>(prev: &[f64; N], cur: &[f64; N], floor: &[f64; N]) -> f64 {
    (0..N)
        .map(|k| {
            let diff = (cur[k] - prev[k]).abs();
            let denom = cur[k].abs().max(floor[k]);
            if diff == 0.0 {
                0.0
            } else if denom == 0.0 {
                f64::INFINITY
            } else {
                diff / denom
            }
        })
        .fold(0.0, f64::max)
}
