//! Slow-mode dynamics: noise pressure, total dissipation rate, stationary
//! points, amplitude/phase evolution and output power.

mod evolve;
mod pressure;

pub use evolve::{integrate_amplitude_phase, PressureCache, StepController, Trajectory, TrajectorySample};
pub use pressure::{
    noise_pressure, noise_pressure_on_grid, pressure_harmonics, PressureHarmonics, PressureOptions, Truncation,
};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::DerivedParameters;
use crate::constants::PHI0;
use crate::error::{Error, Result};
use crate::greens::DriveState;

/// Reference rate γ_ref = ω_b/10⁶ used for the stationary-point tolerance.
pub fn gamma_ref(d: &DerivedParameters) -> f64 {
    d.omega_b / 1e6
}

/// Noise-pressure contribution (g_b²/(2A_bω_b))·Im⟨φ_s²⟩ to Γ_tot.
pub fn pressure_term(d: &DerivedParameters, a_b: f64, pressure: Complex64) -> f64 {
    d.g_b_sq / (2.0 * a_b * d.omega_b) * pressure.im
}

/// Γ_tot(A_b) = γ_b + (g_b²/(2A_bω_b))·Im⟨φ_s²⟩_{ξ,t}.
pub fn total_dissipation(d: &DerivedParameters, a_b: f64, gamma_b: f64, opts: &PressureOptions) -> Result<f64> {
    if !(a_b > 0.0) {
        return Err(Error::PreconditionViolated(format!("A_b must be positive, got {a_b}")));
    }
    let p = noise_pressure(d, &DriveState::amplitude(a_b)?, opts)?;
    Ok(gamma_b + pressure_term(d, a_b, p))
}

/// Output power P = 2γ_b A_b² (1 − N_L) Φ₀²/(π² L_b), watts.
pub fn output_power(d: &DerivedParameters, gamma_b: f64, a_b: f64) -> f64 {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    2.0 * gamma_b * a_b * a_b * (1.0 - d.n_l) * PHI0 * PHI0 / (pi2 * d.circuit.l_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationaryKind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub a_b: f64,
    pub kind: StationaryKind,
    /// Refined local slope ∂Γ_tot/∂A_b (rad/s).
    pub slope: f64,
    /// Γ_tot at the refined root (rad/s).
    pub gamma_tot: f64,
    /// Slope of the secant across the bracketing samples.
    pub secant_slope: f64,
}

/// Options for curve evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub pressure: PressureOptions,
    pub refine_roots: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions { pressure: PressureOptions::default(), refine_roots: true }
    }
}

/// Γ_tot sampled over an amplitude grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationCurve {
    pub amplitudes: Vec<f64>,
    pub gamma_tot: Vec<f64>,
    /// Gauge-removed ⟨φ_s²⟩_{ξ,t}.
    pub noise_pressure: Vec<Complex64>,
    /// Zero-frequency component of ⟨φ_s²⟩, reported but not fed back.
    pub dc_shift: Vec<f64>,
    pub stationary_points: Vec<StationaryPoint>,
    pub gamma_b: f64,
    pub n_max: Vec<usize>,
    pub divisions: Vec<usize>,
}

impl DissipationCurve {
    /// γ_b-independent noise term X(A_b) = Γ_tot − γ_b.
    pub fn noise_term(&self) -> Vec<f64> {
        self.gamma_tot.iter().map(|g| g - self.gamma_b).collect()
    }
}

/// Default amplitude grid: `n` points on (0, a_max], the first tenth
/// log-spaced from 10⁻³ and the rest uniform.
pub fn default_amplitude_grid(n: usize, a_max: f64) -> Vec<f64> {
    let a_min = 1e-3;
    let n_log = (n / 10).max(2);
    let a_join = a_max / (n - n_log + 1) as f64 * 2.0;
    let mut out: Vec<f64> = (0..n_log)
        .map(|i| a_min * (a_join / a_min).powf(i as f64 / n_log as f64))
        .collect();
    let n_lin = n - n_log;
    for i in 0..n_lin {
        out.push(a_join + (a_max - a_join) * i as f64 / (n_lin - 1).max(1) as f64);
    }
    out
}

/// Samples Γ_tot over `amplitudes`, brackets sign changes and refines them.
pub fn dissipation_curve(
    d: &DerivedParameters,
    amplitudes: &[f64],
    gamma_b: f64,
    opts: &CurveOptions,
) -> Result<DissipationCurve> {
    if amplitudes.is_empty() || amplitudes[0] <= 0.0 || amplitudes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::PreconditionViolated("amplitude grid must be positive and strictly increasing".into()));
    }
    let evals: Vec<Result<PressureHarmonics>> = amplitudes
        .par_iter()
        .map(|&a| pressure_harmonics(d, &DriveState::amplitude(a)?, 1, &opts.pressure))
        .collect();
    let mut curve = DissipationCurve {
        amplitudes: amplitudes.to_vec(),
        gamma_tot: Vec::with_capacity(amplitudes.len()),
        noise_pressure: Vec::with_capacity(amplitudes.len()),
        dc_shift: Vec::with_capacity(amplitudes.len()),
        stationary_points: Vec::new(),
        gamma_b,
        n_max: Vec::with_capacity(amplitudes.len()),
        divisions: Vec::with_capacity(amplitudes.len()),
    };
    for (&a, e) in amplitudes.iter().zip(evals) {
        let e = e?;
        curve.gamma_tot.push(gamma_b + pressure_term(d, a, e.pressure()));
        curve.noise_pressure.push(e.pressure());
        curve.dc_shift.push(e.dc_shift());
        curve.n_max.push(e.n_max);
        curve.divisions.push(e.divisions);
    }
    let brackets: Vec<usize> = (0..amplitudes.len().saturating_sub(1))
        .filter(|&i| curve.gamma_tot[i].signum() != curve.gamma_tot[i + 1].signum())
        .collect();
    if opts.refine_roots {
        let pts: Vec<Result<Option<StationaryPoint>>> =
            brackets.par_iter().map(|&i| refine_root(d, &curve, i, &opts.pressure)).collect();
        for p in pts {
            if let Some(p) = p? {
                curve.stationary_points.push(p);
            }
        }
    } else {
        for &i in &brackets {
            curve.stationary_points.push(secant_root(&curve, i));
        }
    }
    Ok(curve)
}

fn secant_root(curve: &DissipationCurve, i: usize) -> StationaryPoint {
    let (a0, a1) = (curve.amplitudes[i], curve.amplitudes[i + 1]);
    let (g0, g1) = (curve.gamma_tot[i], curve.gamma_tot[i + 1]);
    let slope = (g1 - g0) / (a1 - a0);
    StationaryPoint {
        a_b: a0 - g0 / slope,
        kind: if slope > 0.0 { StationaryKind::Stable } else { StationaryKind::Unstable },
        slope,
        gamma_tot: 0.0,
        secant_slope: slope,
    }
}

/// Bracketed Illinois (modified regula falsi) refinement on a frozen lattice,
/// so Γ_tot is a smooth function of A_b during the search.
fn refine_root(
    d: &DerivedParameters,
    curve: &DissipationCurve,
    i: usize,
    base: &PressureOptions,
) -> Result<Option<StationaryPoint>> {
    let divisions = curve.divisions[i].max(curve.divisions[i + 1]) * 2;
    let n = curve.n_max[i].max(curve.n_max[i + 1]);
    let opts = PressureOptions {
        fixed_divisions: Some(divisions),
        truncation: Truncation::Fixed(n),
        ..*base
    };
    let gamma_b = curve.gamma_b;
    let f = |a: f64| total_dissipation(d, a, gamma_b, &opts);
    let (mut a0, mut a1) = (curve.amplitudes[i], curve.amplitudes[i + 1]);
    let secant_slope = (curve.gamma_tot[i + 1] - curve.gamma_tot[i]) / (a1 - a0);
    let (mut f0, mut f1) = (f(a0)?, f(a1)?);
    if f0.signum() == f1.signum() {
        return Ok(None);
    }
    let tol = 0.5e-3 * gamma_ref(d);
    let mut side = 0i8;
    let mut root = a0;
    let mut froot = f0;
    for _ in 0..100 {
        root = (a0 * f1 - a1 * f0) / (f1 - f0);
        froot = f(root)?;
        if froot.abs() < tol || (a1 - a0) < 1e-14 * a1 {
            break;
        }
        if froot.signum() == f1.signum() {
            a1 = root;
            f1 = froot;
            if side == -1 {
                f0 *= 0.5;
            }
            side = -1;
        } else {
            a0 = root;
            f0 = froot;
            if side == 1 {
                f1 *= 0.5;
            }
            side = 1;
        }
    }
    let step = (curve.amplitudes[i + 1] - curve.amplitudes[i]) / 8.0;
    let lo = (root - step).max(0.5 * root);
    let hi = root + step;
    let slope = (f(hi)? - f(lo)?) / (hi - lo);
    Ok(Some(StationaryPoint {
        a_b: root,
        kind: if slope > 0.0 { StationaryKind::Stable } else { StationaryKind::Unstable },
        slope,
        gamma_tot: froot,
        secant_slope,
    }))
}

/// Index range [start, end] of the deepest negative valley of the γ_b = 0 noise term.
pub fn primary_valley(noise_term: &[f64]) -> Option<(usize, usize, usize)> {
    let (i_min, &x_min) = noise_term.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    if !(x_min < 0.0) {
        return None;
    }
    let mut start = i_min;
    while start > 0 && noise_term[start - 1] >= noise_term[start] && noise_term[start - 1] < 0.0 {
        start -= 1;
    }
    let mut end = i_min;
    while end + 1 < noise_term.len() && noise_term[end + 1] >= noise_term[end] && noise_term[end + 1] < 0.0 {
        end += 1;
    }
    Some((start, i_min, end))
}

/// A stable operating point of the engine for some intrinsic loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub q_b: f64,
    pub a_b: f64,
    pub gamma_b: f64,
    /// Watts.
    pub power: f64,
}

/// Stable points on the rising flank of the primary valley of a γ_b = 0 curve:
/// at amplitude A_b the intrinsic loss γ_b = −X(A_b) balances the noise term.
pub fn stable_point_power(d: &DerivedParameters, curve: &DissipationCurve) -> Result<Vec<PowerPoint>> {
    if curve.gamma_b != 0.0 {
        return Err(Error::PreconditionViolated("stable_point_power needs a curve with gamma_b = 0".into()));
    }
    let x = curve.noise_term();
    let Some((_, i_min, end)) = primary_valley(&x) else {
        return Ok(Vec::new());
    };
    Ok((i_min + 1..=end)
        .filter(|&i| x[i] < 0.0 && x[i] > x[i - 1])
        .map(|i| {
            let gamma = -x[i];
            let a = curve.amplitudes[i];
            PowerPoint { q_b: d.omega_b / gamma, a_b: a, gamma_b: gamma, power: output_power(d, gamma, a) }
        })
        .collect())
}

/// Maximum-power stable point, refined by a parabola through the largest sample
/// and its neighbours when it is interior.
pub fn max_power(points: &[PowerPoint]) -> Option<PowerPoint> {
    let (k, best) = points.iter().enumerate().max_by(|a, b| a.1.power.total_cmp(&b.1.power))?;
    let mut best = *best;
    if k > 0 && k + 1 < points.len() {
        let (p0, p1, p2) = (points[k - 1], points[k], points[k + 1]);
        let (x0, x1, x2) = (p0.a_b, p1.a_b, p2.a_b);
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        if denom != 0.0 {
            let a = (x2 * (p1.power - p0.power) + x1 * (p0.power - p2.power) + x0 * (p2.power - p1.power)) / denom;
            let b = (x2 * x2 * (p0.power - p1.power) + x1 * x1 * (p2.power - p0.power) + x0 * x0 * (p1.power - p2.power))
                / denom;
            if a < 0.0 {
                let xv = -b / (2.0 * a);
                if xv > x0 && xv < x2 {
                    let c = p1.power - a * x1 * x1 - b * x1;
                    let pv = a * xv * xv + b * xv + c;
                    if pv >= best.power {
                        // P = k γ_b A_b², with k fixed by the circuit.
                        let k_circ = p1.power / (p1.gamma_b * x1 * x1);
                        let gamma = pv / (k_circ * xv * xv);
                        best = PowerPoint { q_b: p1.q_b * p1.gamma_b / gamma, a_b: xv, gamma_b: gamma, power: pv };
                    }
                }
            }
        }
    }
    Some(best)
}

/// (Q_init, Q_stop) from a γ_b = 0 curve whose first sample is the small-amplitude probe.
pub fn q_thresholds(d: &DerivedParameters, curve: &DissipationCurve) -> (f64, f64) {
    let x = curve.noise_term();
    if x.is_empty() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let x0 = x[0];
    let q_init = if x0 < 0.0 { d.omega_b / x0.abs() } else { f64::INFINITY };
    let q_stop = match primary_valley(&x) {
        Some((_, i_min, _)) => d.omega_b / x[i_min].min(x0).abs(),
        None => f64::INFINITY,
    };
    (q_init, q_stop.min(q_init))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitude_grid_shape() {
        let g = default_amplitude_grid(400, 0.6);
        assert_eq!(g.len(), 400);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[399] - 0.6).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn valley_detection() {
        let x = [-0.1, -0.2, -0.15, -0.5, -1.0, -0.6, -0.2, -0.3, 0.1];
        assert_eq!(primary_valley(&x), Some((2, 4, 6)));
        assert_eq!(primary_valley(&[0.1, 0.2]), None);
    }

    #[test]
    fn parabolic_refinement() {
        let pts: Vec<PowerPoint> = [0.1, 0.2, 0.3]
            .iter()
            .map(|&a: &f64| {
                let p = 1.0 - (a - 0.22) * (a - 0.22);
                PowerPoint { q_b: 1.0, a_b: a, gamma_b: p / (a * a), power: p }
            })
            .collect();
        let m = max_power(&pts).unwrap();
        assert!((m.a_b - 0.22).abs() < 1e-12);
        assert!((m.power - 1.0).abs() < 1e-12);
    }
}
