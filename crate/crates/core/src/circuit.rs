//! Elementary circuit parameters, the flux-minimum equation and every derived
//! parameter of the reduced model.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::PHI0;
use crate::error::{Error, Result};

/// Identifies one of the two filter resonators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    Hot,
    Cold,
}

impl Filter {
    pub const ALL: [Filter; 2] = [Filter::Hot, Filter::Cold];

    pub fn other(self) -> Filter {
        match self {
            Filter::Hot => Filter::Cold,
            Filter::Cold => Filter::Hot,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Filter::Hot => "h",
            Filter::Cold => "c",
        }
    }
}

/// Filter dissipation, either as a rate γ_f (rad/s) or as a quality factor
/// with γ_f = ω_f/Q_f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterDamping {
    Rate(f64),
    QualityFactor(f64),
}

impl FilterDamping {
    pub fn rate(self, omega_f: f64) -> f64 {
        match self {
            FilterDamping::Rate(g) => g,
            FilterDamping::QualityFactor(q) => omega_f / q,
        }
    }

    fn validate(self, name: &str) -> Result<()> {
        let v = match self {
            FilterDamping::Rate(g) => g,
            FilterDamping::QualityFactor(q) => q,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("{name} damping must be positive, got {v}")));
        }
        Ok(())
    }
}

/// Lumped-element values of the circuit, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParameters {
    pub l_a: f64,
    pub l_h: f64,
    pub l_c: f64,
    pub l_b: f64,
    pub l_g: f64,
    pub c_a: f64,
    pub c_h: f64,
    pub c_c: f64,
    pub c_b: f64,
    pub c_ha: f64,
    pub c_ca: f64,
    pub i_c: f64,
    /// External flux through the gradiometric loop (Wb).
    pub phi_ext: f64,
    pub t_c: f64,
    pub t_h: f64,
    pub damping_h: FilterDamping,
    pub damping_c: FilterDamping,
}

impl CircuitParameters {
    /// Parameters of the reference design.
    pub fn table1() -> Self {
        CircuitParameters {
            l_a: 0.55e-9,
            l_h: 0.75e-9,
            l_c: 1.03e-9,
            l_b: 0.78e-9,
            l_g: 96.5e-12,
            c_a: 0.18e-12,
            c_h: 0.27e-12,
            c_c: 0.37e-12,
            c_b: 0.2e-9,
            c_ha: 9.5e-15,
            c_ca: 16.1e-15,
            i_c: 0.8e-6,
            phi_ext: 0.5253 * PHI0,
            t_c: 0.010,
            t_h: 0.300,
            damping_h: FilterDamping::QualityFactor(85.0),
            damping_c: FilterDamping::QualityFactor(85.0),
        }
    }

    /// Checks the type invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("L_a", self.l_a),
            ("L_h", self.l_h),
            ("L_c", self.l_c),
            ("L_b", self.l_b),
            ("L_g", self.l_g),
            ("C_a", self.c_a),
            ("C_h", self.c_h),
            ("C_c", self.c_c),
            ("C_b", self.c_b),
            ("C_ha", self.c_ha),
            ("C_ca", self.c_ca),
            ("I_c", self.i_c),
            ("T_c", self.t_c),
            ("T_h", self.t_h),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.phi_ext.is_finite() {
            return Err(Error::Config("Phi_ext must be finite".into()));
        }
        if self.t_c > self.t_h {
            return Err(Error::Config(format!(
                "T_c ({}) must not exceed T_h ({})",
                self.t_c, self.t_h
            )));
        }
        self.damping_h.validate("hot filter")?;
        self.damping_c.validate("cold filter")?;
        if !self.single_solution() {
            return Err(Error::PreconditionViolated(format!(
                "I_c L_g = {:e} Wb must be below Phi0/(2 pi) = {:e} Wb",
                self.i_c * self.l_g,
                PHI0 / (2.0 * PI)
            )));
        }
        Ok(())
    }

    /// Uniqueness condition of the flux-minimum equation.
    pub fn single_solution(&self) -> bool {
        self.i_c * self.l_g < PHI0 / (2.0 * PI)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ParameterFile = serde_json::from_str(s)?;
        file.into_parameters()
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_file(&self) -> ParameterFile {
        let (q_h, gamma_h) = split_damping(self.damping_h);
        let (q_c, gamma_c) = split_damping(self.damping_c);
        ParameterFile {
            l_a: self.l_a,
            l_h: self.l_h,
            l_c: self.l_c,
            l_b: self.l_b,
            l_g: self.l_g,
            c_a: self.c_a,
            c_h: self.c_h,
            c_c: self.c_c,
            c_b: self.c_b,
            c_ha: self.c_ha,
            c_ca: self.c_ca,
            i_c: self.i_c,
            phi_ext_over_phi0: Some(self.phi_ext / PHI0),
            phi_ext: None,
            t_c: self.t_c,
            t_h: self.t_h,
            q_f: None,
            q_h,
            q_c,
            gamma_h,
            gamma_c,
        }
    }
}

fn split_damping(d: FilterDamping) -> (Option<f64>, Option<f64>) {
    match d {
        FilterDamping::QualityFactor(q) => (Some(q), None),
        FilterDamping::Rate(g) => (None, Some(g)),
    }
}

/// On-disk parameter format: a flat JSON object with ASCII symbol names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterFile {
    #[serde(rename = "L_a")]
    pub l_a: f64,
    #[serde(rename = "L_h")]
    pub l_h: f64,
    #[serde(rename = "L_c")]
    pub l_c: f64,
    #[serde(rename = "L_b")]
    pub l_b: f64,
    #[serde(rename = "L_g")]
    pub l_g: f64,
    #[serde(rename = "C_a")]
    pub c_a: f64,
    #[serde(rename = "C_h")]
    pub c_h: f64,
    #[serde(rename = "C_c")]
    pub c_c: f64,
    #[serde(rename = "C_b")]
    pub c_b: f64,
    #[serde(rename = "C_ha")]
    pub c_ha: f64,
    #[serde(rename = "C_ca")]
    pub c_ca: f64,
    #[serde(rename = "I_c")]
    pub i_c: f64,
    #[serde(rename = "Phi_ext_over_Phi0", default, skip_serializing_if = "Option::is_none")]
    pub phi_ext_over_phi0: Option<f64>,
    #[serde(rename = "Phi_ext", default, skip_serializing_if = "Option::is_none")]
    pub phi_ext: Option<f64>,
    #[serde(rename = "T_c")]
    pub t_c: f64,
    #[serde(rename = "T_h")]
    pub t_h: f64,
    #[serde(rename = "Q_f", default, skip_serializing_if = "Option::is_none")]
    pub q_f: Option<f64>,
    #[serde(rename = "Q_h", default, skip_serializing_if = "Option::is_none")]
    pub q_h: Option<f64>,
    #[serde(rename = "Q_c", default, skip_serializing_if = "Option::is_none")]
    pub q_c: Option<f64>,
    #[serde(rename = "gamma_h", default, skip_serializing_if = "Option::is_none")]
    pub gamma_h: Option<f64>,
    #[serde(rename = "gamma_c", default, skip_serializing_if = "Option::is_none")]
    pub gamma_c: Option<f64>,
}

impl ParameterFile {
    pub fn into_parameters(self) -> Result<CircuitParameters> {
        let phi_ext = match (self.phi_ext_over_phi0, self.phi_ext) {
            (Some(r), None) => r * PHI0,
            (None, Some(p)) => p,
            (Some(_), Some(_)) => {
                return Err(Error::Config("give only one of Phi_ext_over_Phi0 and Phi_ext".into()))
            }
            (None, None) => return Err(Error::Config("missing Phi_ext_over_Phi0".into())),
        };
        let damping = |q: Option<f64>, g: Option<f64>, name: &str| -> Result<FilterDamping> {
            match (q, g) {
                (Some(_), Some(_)) => Err(Error::Config(format!(
                    "give only one of Q_{name} and gamma_{name}"
                ))),
                (None, Some(g)) => Ok(FilterDamping::Rate(g)),
                (Some(q), None) => Ok(FilterDamping::QualityFactor(q)),
                (None, None) => match self.q_f {
                    Some(q) => Ok(FilterDamping::QualityFactor(q)),
                    None => Err(Error::Config(format!(
                        "missing damping for filter {name} (Q_f, Q_{name} or gamma_{name})"
                    ))),
                },
            }
        };
        let p = CircuitParameters {
            l_a: self.l_a,
            l_h: self.l_h,
            l_c: self.l_c,
            l_b: self.l_b,
            l_g: self.l_g,
            c_a: self.c_a,
            c_h: self.c_h,
            c_c: self.c_c,
            c_b: self.c_b,
            c_ha: self.c_ha,
            c_ca: self.c_ca,
            i_c: self.i_c,
            phi_ext,
            t_c: self.t_c,
            t_h: self.t_h,
            damping_h: damping(self.q_h, self.gamma_h, "h")?,
            damping_c: damping(self.q_c, self.gamma_c, "c")?,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Residual of the flux-minimum condition, in amperes.
pub fn flux_residual(params: &CircuitParameters, phi: f64) -> f64 {
    (phi - params.phi_ext) / params.l_g + 2.0 * params.i_c * (PI * phi / PHI0).sin()
}

/// Solves (φ − Φ_ext)/L_g + 2 I_c sin(πφ/Φ₀) = 0 for the potential-minimum flux.
///
/// The residual is strictly increasing under the uniqueness condition and the
/// root lies within 2 I_c L_g of Φ_ext, so a safeguarded Newton iteration on
/// that bracket always converges.
pub fn solve_flux_minimum(params: &CircuitParameters, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::PreconditionViolated(format!("tolerance must be positive, got {tol}")));
    }
    if !(params.l_g > 0.0) || !(params.i_c >= 0.0) {
        return Err(Error::PreconditionViolated("L_g > 0 and I_c >= 0 required".into()));
    }
    if !params.single_solution() {
        return Err(Error::PreconditionViolated(
            "I_c L_g >= Phi0/(2 pi): flux-minimum equation has several solutions".into(),
        ));
    }
    let f = |x: f64| flux_residual(params, x);
    let df = |x: f64| 1.0 / params.l_g + 2.0 * params.i_c * PI / PHI0 * (PI * x / PHI0).cos();
    let scale = params.phi_ext.abs() / params.l_g;
    let target = tol * scale;

    let f_ext = f(params.phi_ext);
    if f_ext == 0.0 || f_ext.abs() < target {
        return Ok(params.phi_ext);
    }
    let width = 2.0 * params.i_c * params.l_g;
    let (mut lo, mut hi) = (params.phi_ext - width, params.phi_ext + width);
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::NoConvergence("flux-minimum bracket does not enclose a root".into()));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 || fx.abs() < target {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / df(x);
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * x.abs().max(PHI0) {
            let fx = f(x);
            if fx.abs() <= target.max(4.0 * f64::EPSILON * scale) {
                return Ok(x);
            }
            return Err(Error::NoConvergence(format!(
                "bracket collapsed with residual {fx:e} A above tolerance {target:e} A"
            )));
        }
    }
    Err(Error::NoConvergence("flux-minimum iteration limit reached".into()))
}

/// Per-filter view of the derived parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterMode {
    pub omega: f64,
    pub gamma: f64,
    /// Coupling of the filter field to the working field, C_fa/C_Σf.
    pub alpha: f64,
    /// Coupling of the working field to the filter field, C_fa/C_Σa.
    pub alpha_a: f64,
    pub resistance: f64,
    pub temperature: f64,
    pub c_sigma: f64,
}

/// Every effective parameter of the reduced model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParameters {
    pub phi_g0: f64,
    pub l_j: f64,
    pub g0_sq: f64,
    pub c_sigma_a: f64,
    pub c_sigma_h: f64,
    pub c_sigma_c: f64,
    pub omega_a: f64,
    pub omega_h: f64,
    pub omega_c: f64,
    pub omega_s: f64,
    pub omega_b: f64,
    pub n_l: f64,
    pub alpha_ha: f64,
    pub alpha_ca: f64,
    pub alpha_h: f64,
    pub alpha_c: f64,
    pub g_s_sq: f64,
    pub g_b_sq: f64,
    pub gamma_h: f64,
    pub gamma_c: f64,
    pub r_h: f64,
    pub r_c: f64,
    pub tau_b: f64,
    pub circuit: CircuitParameters,
}

/// Flux-solve tolerance used by [`derive_parameters`].
pub const FLUX_TOL: f64 = 1e-12;

/// Derives the reduced-model parameters from the elementary circuit values.
pub fn derive_parameters(params: &CircuitParameters) -> Result<DerivedParameters> {
    let phi_g0 = solve_flux_minimum(params, FLUX_TOL)?;
    let x = PI * phi_g0 / PHI0;
    let g0_sq = 4.0 * params.i_c * PI * PI / (PHI0 * PHI0) * x.sin();
    let inv_l_j = 4.0 * params.i_c * PI / PHI0 * x.cos();
    if !(inv_l_j > 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "Josephson inductance is not positive (phi_g0 = {:.4} Phi0)",
            phi_g0 / PHI0
        )));
    }
    let l_j = 1.0 / inv_l_j;
    let c_sigma_a = params.c_a + params.c_ha + params.c_ca;
    let c_sigma_h = params.c_h + params.c_ha;
    let c_sigma_c = params.c_c + params.c_ca;
    let omega_a = 1.0 / (c_sigma_a * params.l_a).sqrt();
    let omega_h = 1.0 / (c_sigma_h * params.l_h).sqrt();
    let omega_c = 1.0 / (c_sigma_c * params.l_c).sqrt();
    let omega_s = ((1.0 + 2.0 * params.l_a / l_j) * omega_a * omega_a).sqrt();
    let n_l = 1.0 / (1.0 + params.l_b / params.l_g + params.l_b / l_j);
    let wb_sq = (1.0 - n_l) / (params.l_b * params.c_b);
    if !(wb_sq > 0.0) {
        return Err(Error::PreconditionViolated("omega_b^2 is not positive".into()));
    }
    let omega_b = wb_sq.sqrt();
    let g_s_sq = PHI0 * n_l * g0_sq / (PI * c_sigma_a);
    let g_b_sq = PHI0 * n_l * g0_sq / (PI * params.c_b);
    let gamma_h = params.damping_h.rate(omega_h);
    let gamma_c = params.damping_c.rate(omega_c);
    let d = DerivedParameters {
        phi_g0,
        l_j,
        g0_sq,
        c_sigma_a,
        c_sigma_h,
        c_sigma_c,
        omega_a,
        omega_h,
        omega_c,
        omega_s,
        omega_b,
        n_l,
        alpha_ha: params.c_ha / c_sigma_a,
        alpha_ca: params.c_ca / c_sigma_a,
        alpha_h: params.c_ha / c_sigma_h,
        alpha_c: params.c_ca / c_sigma_c,
        g_s_sq,
        g_b_sq,
        gamma_h,
        gamma_c,
        r_h: 1.0 / (2.0 * gamma_h * c_sigma_h),
        r_c: 1.0 / (2.0 * gamma_c * c_sigma_c),
        tau_b: 2.0 * PI / omega_b,
        circuit: *params,
    };
    for (name, v) in [
        ("omega_a", d.omega_a),
        ("omega_h", d.omega_h),
        ("omega_c", d.omega_c),
        ("omega_s", d.omega_s),
        ("g_s^2", d.g_s_sq),
        ("g_b^2", d.g_b_sq),
    ] {
        if !v.is_finite() {
            return Err(Error::PreconditionViolated(format!("{name} is not finite")));
        }
    }
    Ok(d)
}

impl DerivedParameters {
    pub fn filter(&self, f: Filter) -> FilterMode {
        match f {
            Filter::Hot => FilterMode {
                omega: self.omega_h,
                gamma: self.gamma_h,
                alpha: self.alpha_h,
                alpha_a: self.alpha_ha,
                resistance: self.r_h,
                temperature: self.circuit.t_h,
                c_sigma: self.c_sigma_h,
            },
            Filter::Cold => FilterMode {
                omega: self.omega_c,
                gamma: self.gamma_c,
                alpha: self.alpha_c,
                alpha_a: self.alpha_ca,
                resistance: self.r_c,
                temperature: self.circuit.t_c,
                c_sigma: self.c_sigma_c,
            },
        }
    }

    /// Working-mode frequency at φ_b = 0, 1/√(C_Σa(L_a + L_J/2)).
    pub fn omega_a_eff0(&self) -> f64 {
        1.0 / (self.c_sigma_a * (self.circuit.l_a + 0.5 * self.l_j)).sqrt()
    }

    /// Filter detuning ω_h − ω_c.
    pub fn gap(&self) -> f64 {
        self.omega_h - self.omega_c
    }

    /// Whether the operating-regime ordering ω_b < ω_c < ω_h holds.
    pub fn regime_ordered(&self) -> bool {
        self.omega_b < self.omega_c && self.omega_c < self.omega_h
    }
}

/// Working-mode frequency ω_a′(φ_b) of the linearized resonator with the SQUID
/// inductance modulated by the slow flux.
pub fn effective_frequency(d: &DerivedParameters, phi_b: f64) -> Result<f64> {
    let radicand = 2.0 - 2.0 * d.g_s_sq * d.l_j * d.c_sigma_a * phi_b;
    if !(radicand > 0.0) {
        return Err(Error::SingularOperatingPoint { phi_b });
    }
    let l_tot = d.circuit.l_a + d.l_j / radicand;
    if !(l_tot > 0.0) {
        return Err(Error::SingularOperatingPoint { phi_b });
    }
    Ok(1.0 / (d.c_sigma_a * l_tot).sqrt())
}
