//! Heat flow through the linearized device, efficiencies and the
//! time-resolved Otto cycle of the working mode.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{effective_frequency, DerivedParameters, Filter};
use crate::constants::{FLUX_SCALE, HBAR};
use crate::error::{Error, Result};
use crate::greens::DriveState;
use crate::quadrature::{integrate_even, EvenRule};
use crate::slowdyn::{pressure_harmonics, PressureOptions};
use crate::spectral::{bath_psd, PsdModel};

/// Filter Green's functions of the linear three-mode system with the working
/// mode at frequency `omega_a_eff`: (G_hh, G_hc, G_ch, G_cc).
pub fn heat_greens(d: &DerivedParameters, omega: f64, omega_a_eff: f64) -> [Complex64; 4] {
    let w2 = omega * omega;
    let w4 = w2 * w2;
    let theta = |f: Filter| {
        let m = d.filter(f);
        Complex64::new(m.omega * m.omega - w2, -2.0 * omega * m.gamma)
    };
    let (th, tc) = (theta(Filter::Hot), theta(Filter::Cold));
    let delta = omega_a_eff * omega_a_eff - w2;
    let (ah, aha, ac, aca) = (d.alpha_h, d.alpha_ha, d.alpha_c, d.alpha_ca);
    let p_h = th * delta - ah * aha * w4;
    let p_c = tc * delta - ac * aca * w4;
    let den = delta * th * tc - w4 * (ah * aha * tc + ac * aca * th);
    let inv = den.inv();
    [p_c * inv, ah * aca * w4 * inv, ac * aha * w4 * inv, p_h * inv]
}

/// Power balance of one filter bath, watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterHeat {
    pub filter: Filter,
    /// Power injected by the bath noise, weighted ⟨ξ_f φ̇_f⟩ over the integration range.
    pub input: f64,
    /// Power returned to the bath, weighted 2γ_f⟨φ̇_f²⟩ over the integration range.
    pub dissipation: f64,
    /// Net heat current from the bath into the device.
    pub net: f64,
}

/// Steady-state heat-flow breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatFlowReport {
    pub hot: FilterHeat,
    pub cold: FilterHeat,
    /// Heat current drawn from the hot bath, watts.
    pub q_dot: f64,
    /// hot.net + cold.net; vanishes in steady state.
    pub balance: f64,
    /// Sum of all input and dissipation terms over the integration range.
    /// Grows with the cutoff for quantum noise; diagnostic only.
    pub gross_exchange: f64,
    pub omega_a_eff: f64,
    pub omega_max: f64,
    pub model: PsdModel,
}

/// Quadrature settings for heat-flow integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatFlowOptions {
    pub omega_max_factor: f64,
    /// Initial lattice points per ω_b.
    pub initial_divisions: usize,
    pub rel_tol: f64,
    pub accept_tol: f64,
    pub max_levels: usize,
    /// Working-mode frequency; φ_b = 0 value when None.
    pub omega_a_eff: Option<f64>,
}

impl Default for HeatFlowOptions {
    fn default() -> Self {
        HeatFlowOptions {
            omega_max_factor: 2.0,
            initial_divisions: 16,
            rel_tol: 1e-7,
            accept_tol: 1e-4,
            max_levels: 10,
            omega_a_eff: None,
        }
    }
}

/// Heat flow through the linear device (working mode at a fixed frequency).
pub fn heat_flow(d: &DerivedParameters, model: PsdModel, opts: &HeatFlowOptions) -> Result<HeatFlowReport> {
    let wa = match opts.omega_a_eff {
        Some(w) => w,
        None => effective_frequency(d, 0.0)?,
    };
    let weight = |f: Filter| {
        let m = d.filter(f);
        if m.alpha_a == 0.0 {
            0.0
        } else {
            d.c_sigma_a * m.alpha_a / m.alpha
        }
    };
    let (wh, wc) = (weight(Filter::Hot), weight(Filter::Cold));
    let (gh, gc) = (d.gamma_h, d.gamma_c);
    // Components: input_h, diss_h, input_c, diss_c, net_h, net_c (all weighted, W).
    let integrand = |w: f64| -> Result<[f64; 6]> {
        let [g_hh, g_hc, g_ch, g_cc] = heat_greens(d, w, wa);
        let sh = bath_psd(d, Filter::Hot, w, model);
        let sc = bath_psd(d, Filter::Cold, w, model);
        let in_h = w * g_hh.im * sh / (2.0 * PI);
        let in_c = w * g_cc.im * sc / (2.0 * PI);
        let diss_h = gh / PI * w * w * (g_hh.norm_sqr() * sh + g_hc.norm_sqr() * sc);
        let diss_c = gc / PI * w * w * (g_cc.norm_sqr() * sc + g_ch.norm_sqr() * sh);
        Ok([
            wh * in_h,
            wh * diss_h,
            wc * in_c,
            wc * diss_c,
            wh * (in_h - diss_h),
            wc * (in_c - diss_c),
        ])
    };
    let omega_max = opts.omega_max_factor * d.omega_s;
    let rule = EvenRule {
        omega_max,
        initial_step: d.omega_b / opts.initial_divisions as f64,
        rel_tol: opts.rel_tol,
        accept_tol: opts.accept_tol,
        max_levels: opts.max_levels,
    };
    // The full-line integral of an even integrand is twice the half line;
    // the formulas above are already full-line densities.
    let coarse = integrate_even(|w| integrand(w).map(|v| [v[0], v[2]]), &EvenRule { max_levels: 0, accept_tol: f64::INFINITY, ..rule }, [0.0; 2])?.0;
    let scale = coarse[0].abs().max(coarse[1].abs());
    let floor = 1e-9 * scale;
    let (v, _) = integrate_even(integrand, &rule, [0.0, 0.0, 0.0, 0.0, floor, floor])?;
    let hot = FilterHeat { filter: Filter::Hot, input: v[0], dissipation: v[1], net: v[4] };
    let cold = FilterHeat { filter: Filter::Cold, input: v[2], dissipation: v[3], net: v[5] };
    Ok(HeatFlowReport {
        hot,
        cold,
        q_dot: hot.net,
        balance: hot.net + cold.net,
        gross_exchange: v[0] + v[1] + v[2] + v[3],
        omega_a_eff: wa,
        omega_max,
        model,
    })
}

/// η_C = 1 − T_c/T_h.
pub fn carnot_efficiency(t_c: f64, t_h: f64) -> f64 {
    1.0 - t_c / t_h
}

/// Otto efficiency 1 − ω′_min/ω′_max for φ_b swinging over ±2A_b.
pub fn otto_efficiency(d: &DerivedParameters, a_b: f64) -> Result<f64> {
    let w1 = effective_frequency(d, 2.0 * a_b)?;
    let w2 = effective_frequency(d, -2.0 * a_b)?;
    Ok(1.0 - w1.min(w2) / w1.max(w2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub efficiency: f64,
    pub eta_carnot: f64,
    pub eta_otto_min: f64,
    pub eta_otto_max: f64,
}

/// η = P/|⟨Q̇⟩| with the Carnot value and the Otto band over [a_min, a_max].
pub fn efficiency(
    d: &DerivedParameters,
    power: f64,
    report: &HeatFlowReport,
    a_range: (f64, f64),
) -> Result<EfficiencyReport> {
    let q = report.q_dot.abs();
    if !(q > 1e-300) || !q.is_finite() {
        return Err(Error::DivisionDegenerate(format!("heat flow {:e} W", report.q_dot)));
    }
    let e1 = otto_efficiency(d, a_range.0)?;
    let e2 = otto_efficiency(d, a_range.1)?;
    Ok(EfficiencyReport {
        efficiency: power / q,
        eta_carnot: carnot_efficiency(d.circuit.t_c, d.circuit.t_h),
        eta_otto_min: e1.min(e2),
        eta_otto_max: e1.max(e2),
    })
}

/// One period of the working-mode Otto cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTrajectory {
    pub a_b: f64,
    pub times: Vec<f64>,
    pub phi_b: Vec<f64>,
    pub omega_a_eff: Vec<f64>,
    pub phi_s_sq: Vec<f64>,
    pub n_a: Vec<f64>,
    pub e_a_ind: Vec<f64>,
    /// −∮ n_a dω_a′: positive when the working mode produces work.
    pub loop_area: f64,
    /// loop_area divided by its bounding box.
    pub normalized_area: f64,
    /// Phase of the fundamental of n_a(t) relative to that of ω_a′(t), rad.
    pub phase_shift: f64,
    /// Gauge-free harmonics c_0..c_K of ⟨φ_s²⟩_ξ(t).
    pub harmonics: Vec<Complex64>,
    /// Largest mismatch between the first and last sample, relative.
    pub closure_error: f64,
}

/// Initial harmonic cutoff; doubled until the tail is below tolerance.
pub const HARMONIC_CUTOFF: usize = 20;
pub const HARMONIC_CUTOFF_MAX: usize = 160;
pub const HARMONIC_TAIL_TOL: f64 = 1e-4;

/// Inductive energy of the working mode for a given ⟨φ_s²⟩ and φ_b.
pub fn inductive_energy(d: &DerivedParameters, phi_s_sq: f64, phi_b: f64) -> f64 {
    let la = d.circuit.l_a;
    let x = d.g_s_sq * phi_b / (d.omega_a * d.omega_a);
    FLUX_SCALE * FLUX_SCALE * phi_s_sq / la * (la / d.l_j - x) * (1.0 + 2.0 * la / d.l_j - 2.0 * x)
}

/// Time-resolved cycle under φ_b(t) = 2A_b cos(ω_b t).
pub fn otto_trajectory(
    d: &DerivedParameters,
    a_b: f64,
    samples_per_period: usize,
    opts: &PressureOptions,
) -> Result<CycleTrajectory> {
    if samples_per_period < 4 {
        return Err(Error::PreconditionViolated("need at least 4 samples per period".into()));
    }
    let drive = DriveState::amplitude(a_b)?;
    let mut k_max = HARMONIC_CUTOFF;
    let h = loop {
        let h = pressure_harmonics(d, &drive, k_max, opts)?;
        let c = &h.harmonics;
        let c0 = c[0].norm();
        let tail = if c0 > 0.0 { (c[k_max].norm() + c[k_max - 1].norm()) / c0 } else { 0.0 };
        if tail <= HARMONIC_TAIL_TOL {
            break h;
        }
        if k_max >= HARMONIC_CUTOFF_MAX {
            return Err(Error::HarmonicTruncation { tail });
        }
        k_max *= 2;
    };
    let c = &h.harmonics;
    let n = samples_per_period;
    let rows: Vec<Result<(f64, f64, f64, f64, f64, f64)>> = (0..=n)
        .into_par_iter()
        .map(|j| {
            let t = d.tau_b * j as f64 / n as f64;
            let ph = 2.0 * PI * j as f64 / n as f64;
            let phi_b = 2.0 * a_b * ph.cos();
            let mut s = c[0].re;
            for (k, ck) in c.iter().enumerate().skip(1) {
                s += 2.0 * (ck * Complex64::from_polar(1.0, -(k as f64) * ph)).re;
            }
            let w = effective_frequency(d, phi_b)?;
            let e = inductive_energy(d, s, phi_b);
            Ok((t, phi_b, w, s, 2.0 * e / (HBAR * w), e))
        })
        .collect();
    let mut tr = CycleTrajectory {
        a_b,
        times: Vec::with_capacity(n + 1),
        phi_b: Vec::with_capacity(n + 1),
        omega_a_eff: Vec::with_capacity(n + 1),
        phi_s_sq: Vec::with_capacity(n + 1),
        n_a: Vec::with_capacity(n + 1),
        e_a_ind: Vec::with_capacity(n + 1),
        loop_area: 0.0,
        normalized_area: 0.0,
        phase_shift: 0.0,
        harmonics: c.clone(),
        closure_error: 0.0,
    };
    for r in rows {
        let (t, p, w, s, na, e) = r?;
        tr.times.push(t);
        tr.phi_b.push(p);
        tr.omega_a_eff.push(w);
        tr.phi_s_sq.push(s);
        tr.n_a.push(na);
        tr.e_a_ind.push(e);
    }
    let mut area = 0.0;
    for j in 0..n {
        area -= 0.5 * (tr.n_a[j] + tr.n_a[j + 1]) * (tr.omega_a_eff[j + 1] - tr.omega_a_eff[j]);
    }
    let span = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
    let bbox = span(&tr.omega_a_eff) * span(&tr.n_a);
    tr.loop_area = area;
    tr.normalized_area = if bbox > 0.0 { area / bbox } else { 0.0 };
    let fundamental = |v: &[f64]| -> Complex64 {
        (0..n).map(|j| v[j] * Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64)).sum()
    };
    let (fw, fn_) = (fundamental(&tr.omega_a_eff), fundamental(&tr.n_a));
    tr.phase_shift = if fw.norm() > 0.0 && fn_.norm() > 0.0 { (fn_ / fw).arg() } else { 0.0 };
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    tr.closure_error = rel(tr.n_a[0], tr.n_a[n]).max(rel(tr.omega_a_eff[0], tr.omega_a_eff[n]));
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{derive_parameters, CircuitParameters};

    fn table1() -> DerivedParameters {
        derive_parameters(&CircuitParameters::table1()).unwrap()
    }

    #[test]
    fn carnot_and_otto() {
        assert_eq!(carnot_efficiency(0.01, 0.3), 1.0 - 0.01 / 0.3);
        let d = table1();
        assert_eq!(otto_efficiency(&d, 0.0).unwrap(), 0.0);
        let e = otto_efficiency(&d, 0.43).unwrap();
        assert!(e > 0.1 && e < 0.5, "{e}");
    }

    #[test]
    fn decoupled_filters_carry_no_heat() {
        let mut d = table1();
        d.alpha_ha = 0.0;
        d.alpha_ca = 0.0;
        let r = heat_flow(&d, PsdModel::Quantum, &HeatFlowOptions::default()).unwrap();
        assert_eq!(r.q_dot, 0.0);
    }

    #[test]
    fn heat_flows_from_hot_bath() {
        let d = table1();
        let r = heat_flow(&d, PsdModel::Quantum, &HeatFlowOptions::default()).unwrap();
        assert!(r.q_dot > 0.0);
        assert!(r.balance.abs() < 1e-6 * r.q_dot.abs(), "balance {:e} vs {:e}", r.balance, r.q_dot);
    }

    #[test]
    fn undriven_cycle_is_degenerate() {
        let d = table1();
        let tr = otto_trajectory(&d, 0.0, 64, &PressureOptions::default()).unwrap();
        assert_eq!(tr.loop_area, 0.0);
        assert!(tr.omega_a_eff.iter().all(|&w| w == tr.omega_a_eff[0]));
        assert!(tr.n_a.iter().all(|&v| (v - tr.n_a[0]).abs() < 1e-15 * v));
    }
}
