//! Shared draws and property checks for the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qhe_core::circuit::{derive_parameters, CircuitParameters, DerivedParameters, FilterDamping};
use qhe_core::constants::PHI0;
use qhe_core::greens::{build_diagonals, DriveState, RESIDUAL_LIMIT};
use qhe_core::slowdyn::{pressure_harmonics, pressure_term, PressureOptions};
use qhe_core::spectral::{bath_psd, filter_response, memory_kernel, total_psd, Filter, PsdModel};
use qhe_core::thermo::{carnot_efficiency, otto_trajectory};

pub fn table1() -> DerivedParameters {
    derive_parameters(&CircuitParameters::table1()).unwrap()
}

/// One randomized draw: a perturbed circuit plus a drive and a probe frequency.
#[derive(Debug, Clone)]
pub struct Draw {
    pub params: CircuitParameters,
    pub a_b: f64,
    pub theta_b: f64,
    /// Probe frequency in units of ω_s.
    pub omega: f64,
}

impl Draw {
    pub fn derived(&self) -> DerivedParameters {
        derive_parameters(&self.params).expect("draw must derive")
    }
}

/// Circuits within ±5% of the reference design, temperatures and filter Q
/// over the swept ranges.
pub fn params_strategy() -> impl Strategy<Value = CircuitParameters> {
    (
        prop::array::uniform10(0.95..1.05f64),
        0.52..0.53f64,
        0.1..0.5f64,
        0.005..0.05f64,
        (30.0..200.0f64, 30.0..200.0f64),
    )
        .prop_map(|(f, flux, t_h, t_c, (q_h, q_c))| {
            let mut p = CircuitParameters::table1();
            p.l_a *= f[0];
            p.l_h *= f[1];
            p.l_c *= f[2];
            p.l_b *= f[3];
            p.c_a *= f[4];
            p.c_h *= f[5];
            p.c_c *= f[6];
            p.c_ha *= f[7];
            p.c_ca *= f[8];
            p.i_c *= f[9];
            p.phi_ext = flux * PHI0;
            p.t_h = t_h;
            p.t_c = t_c;
            p.damping_h = FilterDamping::QualityFactor(q_h);
            p.damping_c = FilterDamping::QualityFactor(q_c);
            p
        })
        .prop_filter("derivable circuit", |p| derive_parameters(p).is_ok())
}

pub fn draw_strategy(a_max: f64) -> impl Strategy<Value = Draw> {
    (params_strategy(), 0.02..a_max, 0.0..(2.0 * PI), 0.001..2.0f64)
        .prop_map(|(params, a_b, theta_b, omega)| Draw { params, a_b, theta_b, omega })
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// K(−ω) = K(ω)*, ℘_f(−ω) = ℘_f(ω)*, S even and nonnegative, Im K ≥ 0 for ω > 0.
pub fn check_spectral(draw: &Draw) -> Result<(), String> {
    let d = draw.derived();
    let w = draw.omega * d.omega_s;
    let kp = memory_kernel(&d, w).map_err(|e| e.to_string())?;
    let km = memory_kernel(&d, -w).map_err(|e| e.to_string())?;
    ensure(rel(km, kp.conj()) < 1e-12, || format!("K symmetry {kp} vs {km}"))?;
    ensure(kp.im >= 0.0, || format!("Im K = {} < 0 at {w}", kp.im))?;
    for f in [Filter::Hot, Filter::Cold] {
        let (rp, rm) = (filter_response(&d, f, w), filter_response(&d, f, -w));
        ensure(rel(rm, rp.conj()) < 1e-12, || format!("response symmetry {rp} vs {rm}"))?;
        for model in [PsdModel::Quantum, PsdModel::Classical] {
            let (sp, sm) = (bath_psd(&d, f, w, model), bath_psd(&d, f, -w, model));
            ensure(sp >= 0.0 && (sp - sm).abs() <= 1e-12 * sp, || format!("bath psd {sp} vs {sm}"))?;
        }
    }
    for model in [PsdModel::Quantum, PsdModel::Classical] {
        let sp = total_psd(&d, w, model).map_err(|e| e.to_string())?;
        let sm = total_psd(&d, -w, model).map_err(|e| e.to_string())?;
        ensure(sp >= 0.0 && (sp - sm).abs() <= 1e-12 * sp, || format!("total psd {sp} vs {sm}"))?;
    }
    Ok(())
}

/// Solve residual below the limit and G_{−n}(−ω) = G_n(ω)*.
pub fn check_sidebands(draw: &Draw) -> Result<(), String> {
    let d = draw.derived();
    let drive = DriveState::new(draw.a_b, draw.theta_b).map_err(|e| e.to_string())?;
    let w = draw.omega * d.omega_s;
    let n_max = 64;
    let solve = |omega: f64| {
        let sys = build_diagonals(&d, &drive, omega, n_max).map_err(|e| e.to_string())?;
        sys.solve().map_err(|e| e.to_string())
    };
    let (gp, sp) = solve(w)?;
    let (gm, sm) = solve(-w)?;
    ensure(sp.residual < RESIDUAL_LIMIT && sm.residual < RESIDUAL_LIMIT, || {
        format!("residuals {:e}, {:e}", sp.residual, sm.residual)
    })?;
    let peak = gp.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let m = gp.len();
    for n in 0..m {
        let diff = (gm[m - 1 - n] - gp[n].conj()).norm();
        ensure(diff <= 1e-10 * peak, || format!("sideband symmetry at index {n}: {diff:e} vs peak {peak:e}"))?;
    }
    Ok(())
}

/// Coarse single-lattice options; the properties hold on any lattice.
pub fn coarse_options() -> PressureOptions {
    PressureOptions::default().fixed(16)
}

/// Γ_tot − γ_b at θ_b equals its θ_b = 0 value.
pub fn check_gauge(draw: &Draw) -> Result<(), String> {
    let d = draw.derived();
    let opts = coarse_options();
    let eval = |theta: f64| -> Result<f64, String> {
        let drive = DriveState::new(draw.a_b, theta).map_err(|e| e.to_string())?;
        let h = pressure_harmonics(&d, &drive, 1, &opts).map_err(|e| e.to_string())?;
        Ok(pressure_term(&d, draw.a_b, h.pressure()))
    };
    let (x0, x1) = (eval(0.0)?, eval(draw.theta_b)?);
    ensure((x0 - x1).abs() <= 1e-8 * x0.abs().max(1e-300), || format!("gauge: {x0:e} vs {x1:e}"))
}

/// Cycle closes, the reconstructed ⟨φ_s²⟩(t) is nonnegative, and its lock-in
/// first harmonic equals the noise pressure.
pub fn check_cycle(draw: &Draw) -> Result<(), String> {
    let d = draw.derived();
    let opts = coarse_options();
    let samples = 64;
    let cyc = otto_trajectory(&d, draw.a_b, samples, &opts).map_err(|e| e.to_string())?;
    ensure(cyc.closure_error < 1e-12, || format!("closure {:e}", cyc.closure_error))?;
    let scale = cyc.harmonics[0].norm();
    for (j, &v) in cyc.phi_s_sq.iter().enumerate() {
        ensure(v >= -1e-6 && v.is_finite(), || format!("negative <phi_s^2> {v:e} at sample {j}"))?;
        ensure(v <= 1e3 * scale, || format!("runaway <phi_s^2> {v:e} at sample {j}"))?;
    }
    // Mean over one period of ⟨φ_s²⟩(t) e^{iω_b t}, samples j = 0..N−1.
    let lock_in: Complex64 = cyc.phi_s_sq[..samples]
        .iter()
        .enumerate()
        .map(|(j, &v)| v * Complex64::from_polar(1.0, 2.0 * PI * j as f64 / samples as f64))
        .sum::<Complex64>()
        / samples as f64;
    let drive = DriveState::amplitude(draw.a_b).map_err(|e| e.to_string())?;
    let p = pressure_harmonics(&d, &drive, 1, &opts).map_err(|e| e.to_string())?.pressure();
    ensure(rel(lock_in, p) < 1e-6, || format!("lock-in {lock_in} vs pressure {p}"))
}

/// η_C = 1 − T_c/T_h to the last bit.
pub fn check_carnot(t_c: f64, t_h: f64) -> Result<(), String> {
    let eta = carnot_efficiency(t_c, t_h);
    ensure(eta == 1.0 - t_c / t_h && (0.0..1.0).contains(&eta), || format!("eta_C = {eta}"))
}
