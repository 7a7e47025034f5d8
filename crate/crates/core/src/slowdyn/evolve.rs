//! Amplitude/phase evolution of the slow mode,
//!
//! dA_b/dt = −γ_b A_b − (g_b²/2ω_b) Im⟨φ_s²⟩,
//! A_b dθ_b/dt = −(g_b²/2ω_b) Re⟨φ_s²⟩,
//!
//! integrated with an adaptive Dormand–Prince 5(4) scheme.

use std::cell::RefCell;
use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::pressure::{noise_pressure, PressureOptions};
use super::pressure_term;
use crate::circuit::DerivedParameters;
use crate::error::{Error, Result};
use crate::greens::DriveState;

/// Lazily filled table of the gauge-removed pressure on a geometric amplitude lattice.
pub struct PressureCache<'a> {
    d: &'a DerivedParameters,
    opts: PressureOptions,
    /// Relative lattice spacing.
    pub tolerance: f64,
    /// Below this amplitude the pressure is continued linearly to zero.
    pub floor: f64,
    nodes: RefCell<BTreeMap<i64, Complex64>>,
}

impl<'a> PressureCache<'a> {
    pub fn new(d: &'a DerivedParameters, opts: PressureOptions, tolerance: f64) -> Self {
        PressureCache { d, opts, tolerance, floor: 1e-4, nodes: RefCell::new(BTreeMap::new()) }
    }

    fn node_amplitude(&self, k: i64) -> f64 {
        self.floor * (1.0 + self.tolerance).powi(k as i32)
    }

    fn node(&self, k: i64) -> Result<Complex64> {
        if let Some(v) = self.nodes.borrow().get(&k) {
            return Ok(*v);
        }
        let v = noise_pressure(self.d, &DriveState::amplitude(self.node_amplitude(k))?, &self.opts)?;
        self.nodes.borrow_mut().insert(k, v);
        Ok(v)
    }

    /// Number of pressure evaluations performed so far.
    pub fn evaluations(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// Pressure at amplitude a (linear interpolation between lattice nodes).
    pub fn pressure(&self, a: f64) -> Result<Complex64> {
        if !(a >= 0.0) {
            return Err(Error::PreconditionViolated(format!("negative amplitude {a}")));
        }
        if a <= self.floor {
            return Ok(self.node(0)? * (a / self.floor));
        }
        let x = (a / self.floor).ln() / (1.0 + self.tolerance).ln();
        let k = x.floor() as i64;
        let (a0, a1) = (self.node_amplitude(k), self.node_amplitude(k + 1));
        let t = (a - a0) / (a1 - a0);
        Ok(self.node(k)? * (1.0 - t) + self.node(k + 1)? * t)
    }
}

/// Step-size control for the amplitude/phase integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepController {
    pub rtol: f64,
    pub atol_amplitude: f64,
    pub atol_phase: f64,
    /// Initial step in units of 1/ω_b.
    pub initial_step: f64,
    /// Smallest step relative to t_end before declaring stiffness.
    pub min_step_fraction: f64,
    pub max_steps: usize,
    /// Relative amplitude spacing of the pressure cache.
    pub cache_tolerance: f64,
}

impl Default for StepController {
    fn default() -> Self {
        StepController {
            rtol: 1e-6,
            atol_amplitude: 1e-9,
            atol_phase: 1e-7,
            initial_step: 100.0,
            min_step_fraction: 1e-12,
            max_steps: 100_000,
            cache_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub a_b: f64,
    pub theta_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub pressure_evaluations: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> TrajectorySample {
        *self.samples.last().expect("trajectory has at least the initial sample")
    }
}

fn rhs(d: &DerivedParameters, cache: &PressureCache, gamma_b: f64, y: [f64; 2]) -> Result<[f64; 2]> {
    let a = y[0].max(0.0);
    let p = cache.pressure(a)?;
    let k = d.g_b_sq / (2.0 * d.omega_b);
    let da = -gamma_b * a - k * p.im;
    let dtheta = if a > cache.floor {
        -k * p.re / a
    } else {
        -k * cache.pressure(cache.floor)?.re / cache.floor
    };
    Ok([da, dtheta])
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates the amplitude/phase equations from `initial` to `t_end`.
pub fn integrate_amplitude_phase(
    d: &DerivedParameters,
    initial: DriveState,
    gamma_b: f64,
    t_end: f64,
    ctrl: &StepController,
    opts: &PressureOptions,
) -> Result<Trajectory> {
    if !(initial.a_b >= 0.0) || !(t_end > 0.0) {
        return Err(Error::PreconditionViolated("need A_b >= 0 and t_end > 0".into()));
    }
    let cache = PressureCache::new(d, *opts, ctrl.cache_tolerance);
    let gamma0 = gamma_b + if initial.a_b > 0.0 { pressure_term(d, initial.a_b, cache.pressure(initial.a_b)?) } else { 0.0 };
    if !(gamma0.abs() < 1e-2 * d.omega_b) {
        return Err(Error::PreconditionViolated(format!(
            "slow-evolution regime violated: |Gamma_tot| = {:e} rad/s vs omega_b = {:e} rad/s",
            gamma0.abs(),
            d.omega_b
        )));
    }
    let mut t = 0.0;
    let mut y = [initial.a_b, initial.theta_b];
    let mut h = (ctrl.initial_step / d.omega_b).min(t_end);
    let h_min = ctrl.min_step_fraction * t_end;
    let mut samples = vec![TrajectorySample { t, a_b: y[0], theta_b: y[1] }];
    let mut rejected = 0;
    let mut k = [[0.0f64; 2]; 7];
    k[0] = rhs(d, &cache, gamma_b, y)?;
    for _ in 0..ctrl.max_steps {
        if t >= t_end {
            break;
        }
        h = h.min(t_end - t);
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys[0] += h * A[s][j] * kj[0];
                ys[1] += h * A[s][j] * kj[1];
            }
            k[s] = rhs(d, &cache, gamma_b, ys)?;
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for i in 0..2 {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for s in 0..7 {
                s5 += B5[s] * k[s][i];
                s4 += B4[s] * k[s][i];
            }
            y5[i] += h * s5;
            let atol = if i == 0 { ctrl.atol_amplitude } else { ctrl.atol_phase };
            let sc = atol + ctrl.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (s5 - s4) / sc).abs());
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            y[0] = y[0].max(0.0);
            samples.push(TrajectorySample { t, a_b: y[0], theta_b: y[1] });
            k[0] = k[6];
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < h_min && t < t_end {
            return Err(Error::StiffnessDetected { t, dt: h });
        }
    }
    if t < t_end {
        return Err(Error::StiffnessDetected { t, dt: h });
    }
    Ok(Trajectory { samples, pressure_evaluations: cache.evaluations(), rejected_steps: rejected })
}
