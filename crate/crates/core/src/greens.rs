//! Sideband (Floquet) Green's function coefficients under a sinusoidal slow
//! drive φ_b(t) = A_b e^{−i(ω_b t + θ_b)} + c.c.
//!
//! For each frequency the coefficients G_n(ω), |n| ≤ n_max, solve
//!
//! P(ω + nω_b) G_n + R* G_{n−1} + R G_{n+1} = δ_{n0},
//!
//! with P(ω) = ω_s² − K(ω) and R = −2g_s² A_b e^{iθ_b}.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{effective_frequency, DerivedParameters};
use crate::error::{Error, Result};
use crate::spectral::{memory_kernel, FrequencyGrid};

/// Amplitude and phase of the slow mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveState {
    pub a_b: f64,
    pub theta_b: f64,
}

impl DriveState {
    pub fn new(a_b: f64, theta_b: f64) -> Result<Self> {
        if !(a_b >= 0.0 && a_b.is_finite() && theta_b.is_finite()) {
            return Err(Error::PreconditionViolated(format!("invalid drive state A_b = {a_b}, theta_b = {theta_b}")));
        }
        Ok(DriveState { a_b, theta_b })
    }

    pub fn amplitude(a_b: f64) -> Result<Self> {
        DriveState::new(a_b, 0.0)
    }
}

/// Off-diagonal coupling R(θ_b) = −2 g_s² A_b e^{iθ_b}.
pub fn coupling(d: &DerivedParameters, drive: &DriveState) -> Complex64 {
    Complex64::from_polar(-2.0 * d.g_s_sq * drive.a_b, drive.theta_b)
}

/// Diagonal function P(ω) = ω_s² − K(ω).
pub fn diagonal_entry(d: &DerivedParameters, omega: f64) -> Result<Complex64> {
    Ok(d.omega_s * d.omega_s - memory_kernel(d, omega)?)
}

/// Tridiagonal sideband system at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub n_max: usize,
    /// P(ω + nω_b), n = −n_max..=n_max.
    pub diag: Vec<Complex64>,
    /// Coefficient of G_{n−1} in row n (R*).
    pub sub: Complex64,
    /// Coefficient of G_{n+1} in row n (R).
    pub sup: Complex64,
}

impl TridiagonalSystem {
    /// Index of the unit right-hand side.
    pub fn rhs_index(&self) -> usize {
        self.n_max
    }

    pub fn solve(&self) -> Result<(Vec<Complex64>, SolveStats)> {
        let mut g = vec![Complex64::new(0.0, 0.0); self.diag.len()];
        let mut work = vec![Complex64::new(0.0, 0.0); 2 * self.diag.len()];
        let stats = solve_tridiagonal(&self.diag, self.sub, self.sup, self.n_max, &mut g, &mut work)?;
        Ok((g, stats))
    }
}

/// Assembles the sideband system at ω.
pub fn build_diagonals(
    d: &DerivedParameters,
    drive: &DriveState,
    omega: f64,
    n_max: usize,
) -> Result<TridiagonalSystem> {
    if n_max < 1 {
        return Err(Error::PreconditionViolated("n_max must be at least 1".into()));
    }
    let n = n_max as i64;
    let diag = (-n..=n)
        .map(|k| diagonal_entry(d, omega + k as f64 * d.omega_b))
        .collect::<Result<Vec<_>>>()?;
    let r = coupling(d, drive);
    Ok(TridiagonalSystem { n_max, diag, sub: r.conj(), sup: r })
}

/// Diagnostics of one tridiagonal solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub growth: f64,
    pub residual: f64,
    pub pivoted: bool,
}

/// Growth factor above which the unpivoted elimination is abandoned.
pub const PIVOT_THRESHOLD: f64 = 1e8;
/// Growth factor beyond which the system is reported as ill conditioned.
pub const GROWTH_LIMIT: f64 = 1e12;

/// Solves the constant-off-diagonal tridiagonal system with right-hand side
/// e_rhs. Uses unpivoted elimination and falls back to partial pivoting when
/// the pivots grow or collapse. `work` must hold at least 2·len entries.
pub fn solve_tridiagonal(
    diag: &[Complex64],
    sub: Complex64,
    sup: Complex64,
    rhs: usize,
    out: &mut [Complex64],
    work: &mut [Complex64],
) -> Result<SolveStats> {
    let m = diag.len();
    let amax = diag
        .iter()
        .map(|p| p.norm())
        .fold(sub.norm().max(sup.norm()), f64::max);
    if amax == 0.0 {
        return Err(Error::IllConditioned { growth: f64::INFINITY });
    }
    let (cp, dp) = work.split_at_mut(m);
    let zero = Complex64::new(0.0, 0.0);
    let mut growth = 0.0f64;
    let mut ok = true;
    let mut prev_c = zero;
    let mut prev_d = zero;
    for i in 0..m {
        let den = diag[i] - sub * prev_c;
        let dn = den.norm();
        if !(dn > 1e-14 * amax) {
            ok = false;
            break;
        }
        growth = growth.max(dn / amax);
        let inv = den.inv();
        prev_c = sup * inv;
        let r = if i == rhs { Complex64::new(1.0, 0.0) } else { zero };
        prev_d = (r - sub * prev_d) * inv;
        cp[i] = prev_c;
        dp[i] = prev_d;
    }
    if ok && growth <= PIVOT_THRESHOLD {
        out[m - 1] = dp[m - 1];
        for i in (0..m - 1).rev() {
            out[i] = dp[i] - cp[i] * out[i + 1];
        }
        let residual = residual_norm(diag, sub, sup, rhs, out);
        return Ok(SolveStats { growth, residual, pivoted: false });
    }
    let growth = solve_pivoted(diag, sub, sup, rhs, out)?;
    let residual = residual_norm(diag, sub, sup, rhs, out);
    Ok(SolveStats { growth, residual, pivoted: true })
}

/// Gaussian elimination with partial pivoting on the banded representation
/// (one extra super-diagonal of fill-in).
fn solve_pivoted(
    diag: &[Complex64],
    sub: Complex64,
    sup: Complex64,
    rhs: usize,
    out: &mut [Complex64],
) -> Result<f64> {
    let m = diag.len();
    let zero = Complex64::new(0.0, 0.0);
    let amax = diag
        .iter()
        .map(|p| p.norm())
        .fold(sub.norm().max(sup.norm()), f64::max);
    let mut d: Vec<Complex64> = diag.to_vec();
    let mut du: Vec<Complex64> = vec![sup; m.saturating_sub(1)];
    let mut du2: Vec<Complex64> = vec![zero; m.saturating_sub(2)];
    let mut b: Vec<Complex64> = (0..m).map(|i| if i == rhs { Complex64::new(1.0, 0.0) } else { zero }).collect();
    for i in 0..m.saturating_sub(1) {
        let dl = sub;
        if d[i].norm() >= dl.norm() {
            if d[i].norm() == 0.0 {
                return Err(Error::IllConditioned { growth: f64::INFINITY });
            }
            let f = dl / d[i];
            d[i + 1] -= f * du[i];
            b[i + 1] = b[i + 1] - f * b[i];
            if i + 2 < m {
                du2[i] = zero;
            }
        } else {
            let f = d[i] / dl;
            d[i] = dl;
            let t = d[i + 1];
            d[i + 1] = du[i] - f * t;
            if i + 2 < m {
                du2[i] = du[i + 1];
                du[i + 1] = -f * du2[i];
            }
            du[i] = t;
            let bt = b[i];
            b[i] = b[i + 1];
            b[i + 1] = bt - f * b[i + 1];
        }
    }
    let mut umax = 0.0f64;
    for i in 0..m {
        umax = umax.max(d[i].norm());
        if i + 1 < m {
            umax = umax.max(du[i].norm());
        }
        if i + 2 < m {
            umax = umax.max(du2[i].norm());
        }
    }
    let growth = umax / amax;
    if d[m - 1].norm() == 0.0 || !(growth <= GROWTH_LIMIT) {
        return Err(Error::IllConditioned { growth });
    }
    out[m - 1] = b[m - 1] / d[m - 1];
    if m > 1 {
        out[m - 2] = (b[m - 2] - du[m - 2] * out[m - 1]) / d[m - 2];
    }
    for i in (0..m.saturating_sub(2)).rev() {
        out[i] = (b[i] - du[i] * out[i + 1] - du2[i] * out[i + 2]) / d[i];
    }
    Ok(growth)
}

/// ‖M g − e_rhs‖₂.
pub fn residual_norm(diag: &[Complex64], sub: Complex64, sup: Complex64, rhs: usize, g: &[Complex64]) -> f64 {
    let m = diag.len();
    let mut acc = 0.0;
    for i in 0..m {
        let mut v = diag[i] * g[i];
        if i > 0 {
            v += sub * g[i - 1];
        }
        if i + 1 < m {
            v += sup * g[i + 1];
        }
        if i == rhs {
            v -= 1.0;
        }
        acc += v.norm_sqr();
    }
    acc.sqrt()
}

/// Residual bound required of every solve.
pub const RESIDUAL_LIMIT: f64 = 1e-10;
/// Tail-decay bound defining an adequate truncation.
pub const TAIL_LIMIT: f64 = 1e-8;
pub const N_MAX_FLOOR: usize = 32;
pub const N_MAX_CAP: usize = 2048;

/// Coefficient table G_n(ω_k) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SidebandGreens {
    pub n_max: usize,
    pub grid: FrequencyGrid,
    pub drive: DriveState,
    coefficients: Vec<Complex64>,
    pub residual_norm: f64,
    pub tail_ratio: f64,
    pub max_growth: f64,
}

impl SidebandGreens {
    pub fn width(&self) -> usize {
        2 * self.n_max + 1
    }

    /// G_n(ω_k).
    pub fn get(&self, k: usize, n: i64) -> Complex64 {
        let idx = (n + self.n_max as i64) as usize;
        self.coefficients[k * self.width() + idx]
    }

    /// Coefficient vector at grid point k, ordered n = −n_max..=n_max.
    pub fn row(&self, k: usize) -> &[Complex64] {
        let w = self.width();
        &self.coefficients[k * w..(k + 1) * w]
    }

    /// F(ω_k) = Σ_n G_n G_{n−1}*.
    pub fn first_harmonic_product(&self, k: usize) -> Complex64 {
        harmonic_product(self.row(k), 1)
    }
}

/// Σ_n G_n G*_{n−h} over the stored range.
pub fn harmonic_product(row: &[Complex64], h: usize) -> Complex64 {
    row[h..].iter().zip(row).map(|(a, b)| a * b.conj()).sum()
}

/// Ratio of the boundary coefficients to the largest coefficient.
pub fn tail_measure(row: &[Complex64]) -> (f64, f64) {
    let edge = row[0].norm().max(row[row.len() - 1].norm());
    let peak = row.iter().map(|g| g.norm()).fold(0.0, f64::max);
    (edge, peak)
}

/// Solves the sideband system at every grid point (parallel over frequencies).
pub fn solve_sidebands(
    d: &DerivedParameters,
    drive: &DriveState,
    grid: &FrequencyGrid,
    n_max: usize,
) -> Result<SidebandGreens> {
    let width = 2 * n_max + 1;
    let rows: Vec<Result<(Vec<Complex64>, SolveStats)>> = grid
        .points()
        .par_iter()
        .map(|&w| build_diagonals(d, drive, w, n_max)?.solve())
        .collect();
    let mut coefficients = Vec::with_capacity(width * grid.len());
    let (mut residual, mut growth, mut edge, mut peak) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for r in rows {
        let (g, stats) = r?;
        residual = residual.max(stats.residual);
        growth = growth.max(stats.growth);
        let (e, p) = tail_measure(&g);
        edge = edge.max(e);
        peak = peak.max(p);
        coefficients.extend_from_slice(&g);
    }
    if residual > RESIDUAL_LIMIT {
        return Err(Error::IllConditioned { growth });
    }
    let tail_ratio = if peak > 0.0 { edge / peak } else { 0.0 };
    if tail_ratio >= TAIL_LIMIT {
        return Err(Error::NoTailDecay { n_max, ratio: tail_ratio });
    }
    Ok(SidebandGreens {
        n_max,
        grid: grid.clone(),
        drive: *drive,
        coefficients,
        residual_norm: residual,
        tail_ratio,
        max_growth: growth,
    })
}

/// Default truncation probes: ±ω_a′(0), ±ω_h, ±ω_c.
pub fn default_probes(d: &DerivedParameters) -> Result<Vec<f64>> {
    let wa = effective_frequency(d, 0.0)?;
    Ok(vec![wa, -wa, d.omega_h, -d.omega_h, d.omega_c, -d.omega_c])
}

/// Tail ratio of the truncated solution at the probe frequencies.
pub fn probe_tail_ratio(d: &DerivedParameters, drive: &DriveState, probes: &[f64], n_max: usize) -> Result<f64> {
    let (mut edge, mut peak) = (0.0f64, 0.0f64);
    for &w in probes {
        let (g, _) = build_diagonals(d, drive, w, n_max)?.solve()?;
        let (e, p) = tail_measure(&g);
        edge = edge.max(e);
        peak = peak.max(p);
    }
    Ok(if peak > 0.0 { edge / peak } else { 0.0 })
}

/// Smallest n_max, doubling from 32 up to 2048, meeting the tail bound at the probes.
pub fn auto_truncate(d: &DerivedParameters, drive: &DriveState, probes: &[f64]) -> Result<usize> {
    if probes.is_empty() {
        return Err(Error::PreconditionViolated("probe set must be non-empty".into()));
    }
    let mut n = N_MAX_FLOOR;
    loop {
        let ratio = probe_tail_ratio(d, drive, probes, n)?;
        if ratio < TAIL_LIMIT {
            return Ok(n);
        }
        if n >= N_MAX_CAP {
            return Err(Error::NoTailDecay { n_max: n, ratio });
        }
        n *= 2;
    }
}
