//! Noise pressure ⟨φ_s²⟩ and its harmonics.
//!
//! The k-th harmonic of the noise-averaged squared field is
//!
//! c_k = (e^{ikθ_b}/2π) ∫ Σ_n G_n(ω) G*_{n−k}(ω) S(ω) dω,
//!
//! whose integrand is even in ω. The integral is evaluated on nested uniform
//! lattices whose spacing divides ω_b, so every sideband shift ω + nω_b lands
//! on the same lattice and P(ω) is tabulated once per level.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::DerivedParameters;
use crate::error::{Error, Result};
use crate::greens::{
    self, coupling, default_probes, diagonal_entry, solve_tridiagonal, DriveState, N_MAX_CAP, RESIDUAL_LIMIT,
    TAIL_LIMIT,
};
use crate::quadrature::CHUNK;
use crate::spectral::{total_psd_dimensionless, FrequencyGrid, PsdModel};

/// Sideband truncation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    Auto,
    Fixed(usize),
}

/// Quadrature and truncation settings for the pressure integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureOptions {
    pub model: PsdModel,
    pub truncation: Truncation,
    /// Integration half-range in units of ω_s.
    pub omega_max_factor: f64,
    /// Lattice points per ω_b at the first level.
    pub initial_divisions: usize,
    /// Largest lattice density tried.
    pub max_divisions: usize,
    /// Target relative change between successive levels.
    pub rel_tol: f64,
    /// Largest relative change accepted at the density cap.
    pub accept_tol: f64,
    /// Evaluate on a single lattice of this density, without refinement.
    pub fixed_divisions: Option<usize>,
}

impl Default for PressureOptions {
    fn default() -> Self {
        PressureOptions {
            model: PsdModel::Quantum,
            truncation: Truncation::Auto,
            omega_max_factor: 2.0,
            initial_divisions: 16,
            max_divisions: 2048,
            rel_tol: 1e-5,
            accept_tol: 1e-4,
            fixed_divisions: None,
        }
    }
}

impl PressureOptions {
    pub fn with_model(mut self, model: PsdModel) -> Self {
        self.model = model;
        self
    }

    pub fn fixed(mut self, divisions: usize) -> Self {
        self.fixed_divisions = Some(divisions);
        self
    }
}

/// Harmonics c_0..c_K of the noise-averaged squared field, gauge factor removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureHarmonics {
    pub harmonics: Vec<Complex64>,
    pub n_max: usize,
    pub divisions: usize,
    pub rel_change: f64,
    pub residual: f64,
    pub tail_ratio: f64,
    pub points: usize,
}

impl PressureHarmonics {
    /// Time-averaged pressure ⟨φ_s²⟩_{ξ,t}: the first harmonic.
    pub fn pressure(&self) -> Complex64 {
        self.harmonics.get(1).copied().unwrap_or_default()
    }

    /// Zero-frequency component (the neglected DC shift).
    pub fn dc_shift(&self) -> f64 {
        self.harmonics[0].re
    }
}

/// Noise-averaged first harmonic ⟨φ_s²⟩_{ξ,t}(A_b, θ_b) with e^{iθ_b} removed.
pub fn noise_pressure(d: &DerivedParameters, drive: &DriveState, opts: &PressureOptions) -> Result<Complex64> {
    Ok(pressure_harmonics(d, drive, 1, opts)?.pressure())
}

/// Computes c_0..c_{k_max}.
pub fn pressure_harmonics(
    d: &DerivedParameters,
    drive: &DriveState,
    k_max: usize,
    opts: &PressureOptions,
) -> Result<PressureHarmonics> {
    let mut n_max = match opts.truncation {
        Truncation::Fixed(n) => n,
        Truncation::Auto => greens::auto_truncate(d, drive, &default_probes(d)?)?,
    };
    if n_max < k_max.max(1) {
        return Err(Error::PreconditionViolated("n_max must exceed the harmonic order".into()));
    }
    loop {
        let r = integrate(d, drive, k_max, n_max, opts)?;
        if r.tail_ratio < TAIL_LIMIT {
            return Ok(r);
        }
        if matches!(opts.truncation, Truncation::Fixed(_)) || n_max >= N_MAX_CAP {
            return Err(Error::NoTailDecay { n_max, ratio: r.tail_ratio });
        }
        n_max *= 2;
    }
}

#[derive(Debug, Clone)]
struct LevelSums {
    sums: Vec<Complex64>,
    residual: f64,
    edge: f64,
    peak: f64,
}

impl LevelSums {
    fn zero(k: usize) -> Self {
        LevelSums { sums: vec![Complex64::new(0.0, 0.0); k + 1], residual: 0.0, edge: 0.0, peak: 0.0 }
    }

    fn absorb(&mut self, o: &LevelSums) {
        for (a, b) in self.sums.iter_mut().zip(&o.sums) {
            *a += b;
        }
        self.residual = self.residual.max(o.residual);
        self.edge = self.edge.max(o.edge);
        self.peak = self.peak.max(o.peak);
    }
}

/// One lattice pass: points ω_i = offset + i·h for i < count, each weighted
/// by weight(i), with sideband shifts of `stride` lattice steps.
#[allow(clippy::too_many_arguments)]
fn lattice_pass(
    d: &DerivedParameters,
    r: Complex64,
    offset: f64,
    h: f64,
    stride: usize,
    count: usize,
    n_max: usize,
    k_max: usize,
    model: PsdModel,
    weight: impl Fn(usize) -> f64 + Sync,
) -> Result<LevelSums> {
    let base = n_max * stride;
    let table_len = count + 2 * base;
    let table: Vec<Complex64> = (0..table_len)
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|k| diagonal_entry(d, offset + (k as f64 - base as f64) * h))
        .collect::<Result<_>>()?;
    let width = 2 * n_max + 1;
    let chunks = count.div_ceil(CHUNK);
    let partial: Vec<Result<LevelSums>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = LevelSums::zero(k_max);
            let mut diag = vec![Complex64::new(0.0, 0.0); width];
            let mut g = vec![Complex64::new(0.0, 0.0); width];
            let mut work = vec![Complex64::new(0.0, 0.0); 2 * width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                let omega = offset + i as f64 * h;
                let s = total_psd_dimensionless(d, omega, model)?;
                for (n, slot) in diag.iter_mut().enumerate() {
                    *slot = table[i + n * stride];
                }
                let stats = solve_tridiagonal(&diag, r.conj(), r, n_max, &mut g, &mut work)?;
                acc.residual = acc.residual.max(stats.residual);
                let (e, p) = greens::tail_measure(&g);
                acc.edge = acc.edge.max(e);
                acc.peak = acc.peak.max(p);
                let ws = weight(i) * s;
                if ws == 0.0 {
                    continue;
                }
                for k in 0..=k_max {
                    acc.sums[k] += ws * greens::harmonic_product(&g, k);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = LevelSums::zero(k_max);
    for p in partial {
        total.absorb(&p?);
    }
    Ok(total)
}

fn integrate(
    d: &DerivedParameters,
    drive: &DriveState,
    k_max: usize,
    n_max: usize,
    opts: &PressureOptions,
) -> Result<PressureHarmonics> {
    let r = coupling(d, drive);
    let omega_max = opts.omega_max_factor * d.omega_s;
    let m0 = opts.fixed_divisions.unwrap_or(opts.initial_divisions);
    if m0 == 0 || !(omega_max > 0.0) {
        return Err(Error::PreconditionViolated("lattice density and range must be positive".into()));
    }
    let h0 = d.omega_b / m0 as f64;
    let j0 = (omega_max / h0).ceil() as usize;
    let gauge: Vec<Complex64> = (0..=k_max)
        .map(|k| Complex64::from_polar(1.0, k as f64 * drive.theta_b) / (2.0 * std::f64::consts::PI))
        .collect();
    let finish = |raw: &LevelSums, h: f64| -> Vec<Complex64> {
        raw.sums.iter().zip(&gauge).map(|(s, g)| s * g * h).collect()
    };

    let mut raw = lattice_pass(d, r, 0.0, h0, m0, j0 + 1, n_max, k_max, opts.model, |i| {
        if i == 0 {
            1.0
        } else {
            2.0
        }
    })?;
    let mut points = j0 + 1;
    let mut h = h0;
    let mut m = m0;
    let mut prev = finish(&raw, h);
    let mut rel_change = f64::INFINITY;
    let done = |raw: &LevelSums, h: f64, m: usize, points: usize, rel_change: f64| -> Result<PressureHarmonics> {
        if raw.residual > RESIDUAL_LIMIT {
            return Err(Error::IllConditioned { growth: f64::NAN });
        }
        Ok(PressureHarmonics {
            harmonics: finish(raw, h),
            n_max,
            divisions: m,
            rel_change,
            residual: raw.residual,
            tail_ratio: if raw.peak > 0.0 { raw.edge / raw.peak } else { 0.0 },
            points,
        })
    };
    if opts.fixed_divisions.is_some() {
        return done(&raw, h, m, points, f64::NAN);
    }
    while 2 * m <= opts.max_divisions {
        let count = j0 * (m / m0);
        let new = lattice_pass(d, r, 0.5 * h, h, m, count, n_max, k_max, opts.model, |_| 2.0)?;
        raw.absorb(&new);
        points += count;
        h *= 0.5;
        m *= 2;
        let cur = finish(&raw, h);
        rel_change = harmonic_change(&prev, &cur);
        prev = cur;
        if rel_change <= opts.rel_tol {
            return done(&raw, h, m, points, rel_change);
        }
    }
    if rel_change <= opts.accept_tol {
        return done(&raw, h, m, points, rel_change);
    }
    Err(Error::QuadratureNotConverged { rel_change, divisions: m })
}

/// Convergence measure over harmonics: the real and imaginary parts of each
/// are compared on their own scale, floored at 10⁻³ of the harmonic's modulus
/// and 10⁻⁹ of the DC component.
fn harmonic_change(prev: &[Complex64], cur: &[Complex64]) -> f64 {
    let c0 = cur[0].norm();
    let mut worst = 0.0f64;
    for (p, c) in prev.iter().zip(cur) {
        let floor = (1e-3 * c.norm()).max(1e-9 * c0);
        for (a, b) in [(p.re, c.re), (p.im, c.im)] {
            let diff = (a - b).abs();
            if diff == 0.0 {
                continue;
            }
            let denom = b.abs().max(floor);
            worst = worst.max(if denom > 0.0 { diff / denom } else { f64::INFINITY });
        }
    }
    worst
}

/// Pressure from an explicit coefficient table and its trapezoid weights.
pub fn noise_pressure_on_grid(
    d: &DerivedParameters,
    drive: &DriveState,
    grid: &FrequencyGrid,
    n_max: usize,
    model: PsdModel,
) -> Result<Complex64> {
    let sg = greens::solve_sidebands(d, drive, grid, n_max)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, (&w, &wt)) in grid.points().iter().zip(grid.weights()).enumerate() {
        let s = total_psd_dimensionless(d, w, model)?;
        acc += wt * s * sg.first_harmonic_product(k);
    }
    Ok(acc * Complex64::from_polar(1.0, drive.theta_b) / (2.0 * std::f64::consts::PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{derive_parameters, CircuitParameters};

    fn table1() -> DerivedParameters {
        derive_parameters(&CircuitParameters::table1()).unwrap()
    }

    #[test]
    fn undriven_pressure_vanishes() {
        let d = table1();
        let r = pressure_harmonics(&d, &DriveState::amplitude(0.0).unwrap(), 1, &PressureOptions::default()).unwrap();
        assert_eq!(r.pressure(), Complex64::new(0.0, 0.0));
        assert!((r.dc_shift() - 0.0038525).abs() < 1e-6, "c0 = {}", r.dc_shift());
    }

    #[test]
    fn matches_prototype_values() {
        let d = table1();
        let opts = PressureOptions::default();
        let r = pressure_harmonics(&d, &DriveState::amplitude(0.43).unwrap(), 2, &opts).unwrap();
        let c1 = r.pressure();
        assert!((c1 - Complex64::new(1.57897e-3, -2.39340e-4)).norm() < 2e-8, "c1 = {c1}");
        assert!((r.dc_shift() - 0.0044527).abs() < 1e-6);
    }

    #[test]
    fn lattice_agrees_with_explicit_grid() {
        let d = table1();
        let drive = DriveState::new(0.3, 0.9).unwrap();
        let opts = PressureOptions { truncation: Truncation::Fixed(32), ..Default::default() };
        let a = noise_pressure(&d, &drive, &opts.fixed(64)).unwrap();
        let grid = FrequencyGrid::uniform(2.0 * d.omega_s, d.omega_b / 64.0).unwrap();
        let b = noise_pressure_on_grid(&d, &drive, &grid, 32, PsdModel::Quantum).unwrap();
        assert!((a - b).norm() < 1e-6 * a.norm(), "{a} vs {b}");
    }

    #[test]
    fn gauge_invariance() {
        let d = table1();
        let opts = PressureOptions::default().fixed(16);
        let a = noise_pressure(&d, &DriveState::new(0.3, 0.0).unwrap(), &opts).unwrap();
        let b = noise_pressure(&d, &DriveState::new(0.3, 1.3).unwrap(), &opts).unwrap();
        assert!((a - b).norm() < 1e-10 * a.norm());
    }
}
