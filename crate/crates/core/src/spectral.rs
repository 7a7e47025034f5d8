//! Frequency-domain building blocks: filter responses, memory kernel, bath
//! noise spectra and the time-independent Green's function.
//!
//! Fourier convention: f(t) = (1/2π)∫ f(ω) e^{−iωt} dω. With γ_f > 0 every
//! retarded response has a non-negative imaginary part for ω > 0, so
//! Im K(ω) ≥ 0 and Im G₀(ω) ≥ 0 there.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{effective_frequency, DerivedParameters};
pub use crate::circuit::Filter;
use crate::constants::{FLUX_SCALE, HBAR, K_B};
use crate::error::{Error, Result};

/// Bath noise model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PsdModel {
    #[default]
    Quantum,
    Classical,
}

impl PsdModel {
    pub fn label(self) -> &'static str {
        match self {
            PsdModel::Quantum => "quantum",
            PsdModel::Classical => "classical",
        }
    }
}

impl std::str::FromStr for PsdModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(PsdModel::Quantum),
            "classical" => Ok(PsdModel::Classical),
            other => Err(Error::Config(format!("unknown noise model {other:?}"))),
        }
    }
}

/// Threshold on ħω/(2k_BT) below which the ω → 0 limit of the quantum PSD is used.
const PSD_SMALL_ARG: f64 = 1e-8;
/// Relative size of the kernel denominator treated as a pole.
const POLE_TOL: f64 = 1e-14;

/// ℘_f(ω) = α_fa ω² / (ω_f² − ω² − 2iγ_f ω).
pub fn filter_response(d: &DerivedParameters, f: Filter, omega: f64) -> Complex64 {
    let m = d.filter(f);
    let w2 = omega * omega;
    m.alpha_a * w2 / Complex64::new(m.omega * m.omega - w2, -2.0 * m.gamma * omega)
}

/// Denominator ω_a² − ω²[1 + Σ_f α_f ℘_f(ω)] of the memory kernel.
pub fn kernel_denominator(d: &DerivedParameters, omega: f64) -> Complex64 {
    let w2 = omega * omega;
    let sum = d.alpha_h * filter_response(d, Filter::Hot, omega)
        + d.alpha_c * filter_response(d, Filter::Cold, omega);
    d.omega_a * d.omega_a - w2 * (1.0 + sum)
}

fn checked_denominator(d: &DerivedParameters, omega: f64) -> Result<Complex64> {
    let den = kernel_denominator(d, omega);
    let scale = d.omega_a * d.omega_a + omega * omega;
    if !(den.norm() > POLE_TOL * scale) {
        return Err(Error::PoleEncountered { omega });
    }
    Ok(den)
}

/// Memory kernel K(ω) = ω_a⁴ / (ω_a² − ω²[1 + Σ_f α_f ℘_f(ω)]).
pub fn memory_kernel(d: &DerivedParameters, omega: f64) -> Result<Complex64> {
    let wa2 = d.omega_a * d.omega_a;
    Ok(wa2 * wa2 / checked_denominator(d, omega)?)
}

/// Two-sided bath PSD of ξ_f in SI flux units (Wb² s⁻³).
pub fn bath_psd(d: &DerivedParameters, f: Filter, omega: f64, model: PsdModel) -> f64 {
    let m = d.filter(f);
    let pref = m.gamma * m.gamma * m.resistance;
    let classical = 8.0 * pref * K_B * m.temperature;
    match model {
        PsdModel::Classical => classical,
        PsdModel::Quantum => {
            let x = HBAR * omega.abs() / (2.0 * K_B * m.temperature);
            if x < PSD_SMALL_ARG {
                classical
            } else {
                4.0 * HBAR * omega.abs() * pref / x.tanh()
            }
        }
    }
}

/// Total noise PSD S(ω) acting on the working field, SI flux units.
pub fn total_psd(d: &DerivedParameters, omega: f64, model: PsdModel) -> Result<f64> {
    let den = checked_denominator(d, omega)?;
    let wa2 = d.omega_a * d.omega_a;
    let mut s = 0.0;
    for f in Filter::ALL {
        s += filter_response(d, f, omega).norm_sqr() * bath_psd(d, f, omega, model);
    }
    Ok(wa2 * wa2 * s / den.norm_sqr())
}

/// Total noise PSD in units of the dimensionless field φ = πφ̃/Φ₀.
pub fn total_psd_dimensionless(d: &DerivedParameters, omega: f64, model: PsdModel) -> Result<f64> {
    Ok(total_psd(d, omega, model)? / (FLUX_SCALE * FLUX_SCALE))
}

/// Time-independent Green's function G₀(ω) = [ω_s² − 2g_s²φ_b − K(ω)]⁻¹.
pub fn static_greens(d: &DerivedParameters, phi_b: f64, omega: f64) -> Result<Complex64> {
    let p = d.omega_s * d.omega_s - 2.0 * d.g_s_sq * phi_b - memory_kernel(d, omega)?;
    if !(p.norm() > POLE_TOL * d.omega_s * d.omega_s) {
        return Err(Error::PoleEncountered { omega });
    }
    Ok(p.inv())
}

/// How a grid was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    Uniform { step: f64 },
    Refined { base_step: f64, fine_step: f64, windows: Vec<(f64, f64)> },
}

/// Ordered angular-frequency grid with trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    spacing: GridSpacing,
}

/// Parameters of the piecewise-uniform refined grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementSpec {
    /// Half-range in units of ω_s.
    pub omega_max_factor: f64,
    /// Base resolution in units of ω_b.
    pub base_step_factor: f64,
    /// Fine resolution in units of min γ_f.
    pub fine_step_factor: f64,
    /// Window width in units of the local filter linewidth.
    pub window_width_factor: f64,
    /// Working-mode sidebands ±n ω_b that receive a window.
    pub sidebands: usize,
}

impl Default for RefinementSpec {
    fn default() -> Self {
        RefinementSpec {
            omega_max_factor: 2.0,
            base_step_factor: 1.0 / 8.0,
            fine_step_factor: 1.0 / 20.0,
            window_width_factor: 20.0,
            sidebands: 10,
        }
    }
}

impl FrequencyGrid {
    /// Symmetric uniform grid j·step, |j·step| ≤ omega_max (rounded outward).
    pub fn uniform(omega_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && omega_max > 0.0) {
            return Err(Error::Config("grid step and range must be positive".into()));
        }
        let j = (omega_max / step).ceil() as i64;
        let points: Vec<f64> = (-j..=j).map(|k| k as f64 * step).collect();
        let weights = trapezoid_weights(&points);
        Ok(FrequencyGrid { points, weights, spacing: GridSpacing::Uniform { step } })
    }

    /// Piecewise-uniform symmetric grid refined around the filter resonances and
    /// the working-mode sidebands.
    pub fn refined(d: &DerivedParameters, spec: &RefinementSpec) -> Result<Self> {
        let omega_max = spec.omega_max_factor * d.omega_s;
        let base = spec.base_step_factor * d.omega_b;
        let gmin = d.gamma_h.min(d.gamma_c);
        let fine = spec.fine_step_factor * gmin;
        if !(base > 0.0 && fine > 0.0 && omega_max > 0.0) {
            return Err(Error::Config("refined grid needs positive steps and range".into()));
        }
        let w_a = effective_frequency(d, 0.0)?;
        let mut windows = Vec::new();
        let mut push = |c: f64, half: f64| {
            let lo = (c - half).max(0.0);
            let hi = (c + half).min(omega_max);
            if hi > lo {
                windows.push((lo, hi));
            }
        };
        push(d.omega_h, 0.5 * spec.window_width_factor * d.gamma_h);
        push(d.omega_c, 0.5 * spec.window_width_factor * d.gamma_c);
        let n = spec.sidebands as i64;
        for k in -n..=n {
            push((w_a + k as f64 * d.omega_b).abs(), 0.5 * spec.window_width_factor * gmin);
        }
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for w in windows {
            match merged.last_mut() {
                Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
                _ => merged.push(w),
            }
        }
        let mut half = vec![0.0];
        let mut cursor = 0.0;
        let fill = |a: f64, b: f64, step: f64, out: &mut Vec<f64>| {
            if b <= a {
                return;
            }
            let n = ((b - a) / step).ceil().max(1.0) as usize;
            for k in 1..=n {
                out.push(a + (b - a) * k as f64 / n as f64);
            }
        };
        for &(lo, hi) in &merged {
            fill(cursor, lo, base, &mut half);
            fill(lo.max(cursor), hi, fine, &mut half);
            cursor = cursor.max(hi);
        }
        fill(cursor, omega_max, base, &mut half);
        let mut points: Vec<f64> = half.iter().rev().map(|w| -w).collect();
        points.pop();
        points.extend_from_slice(&half);
        let weights = trapezoid_weights(&points);
        Ok(FrequencyGrid {
            points,
            weights,
            spacing: GridSpacing::Refined { base_step: base, fine_step: fine, windows: merged },
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> &GridSpacing {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn omega_max(&self) -> f64 {
        self.points.last().copied().unwrap_or(0.0)
    }

    /// Whether the grid is symmetric about zero to round-off.
    pub fn is_symmetric(&self) -> bool {
        let n = self.points.len();
        (0..n).all(|i| {
            let (a, b) = (self.points[i], self.points[n - 1 - i]);
            (a + b).abs() <= 1e-12 * a.abs().max(1.0)
        })
    }

    /// Index of the point mirrored through zero, if the grid is symmetric.
    pub fn mirror(&self, i: usize) -> usize {
        self.points.len() - 1 - i
    }

    /// Trapezoid quadrature of sampled values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = points[i + 1] - points[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Spectral quantities tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTables {
    pub omega: Vec<f64>,
    pub kernel: Vec<Complex64>,
    /// S(ω), SI flux units.
    pub total_psd: Vec<f64>,
    pub psd_h: Vec<f64>,
    pub psd_c: Vec<f64>,
    pub response_h: Vec<Complex64>,
    pub response_c: Vec<Complex64>,
    pub static_greens: Vec<Complex64>,
    pub phi_b: f64,
}

impl SpectralTables {
    pub fn compute(
        d: &DerivedParameters,
        grid: &FrequencyGrid,
        phi_b: f64,
        model: PsdModel,
    ) -> Result<Self> {
        let n = grid.len();
        let mut t = SpectralTables {
            omega: grid.points().to_vec(),
            kernel: Vec::with_capacity(n),
            total_psd: Vec::with_capacity(n),
            psd_h: Vec::with_capacity(n),
            psd_c: Vec::with_capacity(n),
            response_h: Vec::with_capacity(n),
            response_c: Vec::with_capacity(n),
            static_greens: Vec::with_capacity(n),
            phi_b,
        };
        for &w in grid.points() {
            t.kernel.push(memory_kernel(d, w)?);
            t.total_psd.push(total_psd(d, w, model)?);
            t.psd_h.push(bath_psd(d, Filter::Hot, w, model));
            t.psd_c.push(bath_psd(d, Filter::Cold, w, model));
            t.response_h.push(filter_response(d, Filter::Hot, w));
            t.response_c.push(filter_response(d, Filter::Cold, w));
            t.static_greens.push(static_greens(d, phi_b, w)?);
        }
        Ok(t)
    }

    /// Rows of the `spectral dump` table.
    pub fn csv_rows(&self) -> impl Iterator<Item = [f64; 8]> + '_ {
        (0..self.omega.len()).map(move |i| {
            [
                self.omega[i],
                self.kernel[i].re,
                self.kernel[i].im,
                self.total_psd[i],
                self.psd_h[i],
                self.psd_c[i],
                self.static_greens[i].re,
                self.static_greens[i].im,
            ]
        })
    }
}

pub const SPECTRAL_CSV_HEADER: [&str; 8] =
    ["omega_rad_s", "re_K", "im_K", "S_total", "S_h", "S_c", "re_G0", "im_G0"];

/// Indices of strict local maxima of a sampled sequence.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect()
}
