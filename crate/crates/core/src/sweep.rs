//! One-parameter sweeps of the full engine analysis with resumable,
//! per-point persistence.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{derive_parameters, CircuitParameters, DerivedParameters, FilterDamping};
use crate::error::{Error, Result};
use crate::slowdyn::{
    default_amplitude_grid, dissipation_curve, max_power, primary_valley, q_thresholds, stable_point_power,
    CurveOptions, DissipationCurve, PowerPoint,
};
use crate::spectral::PsdModel;
use crate::thermo::{heat_flow, HeatFlowOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// T_h in kelvin.
    Temperature,
    /// ω_h − ω_c in units of ω_b.
    Gap,
    /// Common filter quality factor ω_f/γ_f.
    FilterQ,
    /// T_h in kelvin under classical noise.
    NoiseModel,
}

impl SweepKind {
    pub fn label(self) -> &'static str {
        match self {
            SweepKind::Temperature => "temperature",
            SweepKind::Gap => "gap",
            SweepKind::FilterQ => "filter_q",
            SweepKind::NoiseModel => "noise_model",
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temperature" => Ok(SweepKind::Temperature),
            "gap" => Ok(SweepKind::Gap),
            "filter_q" => Ok(SweepKind::FilterQ),
            "noise_model" => Ok(SweepKind::NoiseModel),
            other => Err(Error::Config(format!("unknown sweep kind {other:?}"))),
        }
    }
}

/// Amplitude grid and quadrature used for each point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSettings {
    pub amplitude_points: usize,
    pub a_max: f64,
    pub curve: CurveOptions,
}

impl Default for PointSettings {
    fn default() -> Self {
        PointSettings {
            amplitude_points: 96,
            a_max: 0.7,
            curve: CurveOptions { refine_roots: false, ..CurveOptions::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub base: CircuitParameters,
    pub model: PsdModel,
    pub outputs: PathBuf,
    pub settings: PointSettings,
}

impl SweepSpec {
    /// Checks the spec and returns it with the base value merged into the sorted values.
    pub fn resolved(&self) -> Result<SweepSpec> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        if self.settings.amplitude_points < 8 {
            return Err(Error::Config("need at least 8 amplitude points".into()));
        }
        self.base.validate()?;
        let base_value = base_value(self.kind, &self.base)?;
        let mut values = self.values.clone();
        if !values.iter().any(|&v| same_value(v, base_value)) {
            values.push(base_value);
        }
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| same_value(*a, *b));
        Ok(SweepSpec { values, ..self.clone() })
    }

    fn effective_model(&self) -> PsdModel {
        match self.kind {
            SweepKind::NoiseModel => PsdModel::Classical,
            _ => self.model,
        }
    }
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// The swept coordinate of the base parameters.
pub fn base_value(kind: SweepKind, base: &CircuitParameters) -> Result<f64> {
    Ok(match kind {
        SweepKind::Temperature | SweepKind::NoiseModel => base.t_h,
        SweepKind::Gap => {
            let d = derive_parameters(base)?;
            d.gap() / d.omega_b
        }
        SweepKind::FilterQ => {
            let d = derive_parameters(base)?;
            let (qh, qc) = (d.omega_h / d.gamma_h, d.omega_c / d.gamma_c);
            if !same_value(qh, qc) {
                return Err(Error::Config(format!("filter-Q sweep needs equal base quality factors ({qh}, {qc})")));
            }
            qh
        }
    })
}

/// Base parameters moved to `value`; the base value itself returns the base unchanged.
pub fn apply(kind: SweepKind, base: &CircuitParameters, value: f64) -> Result<CircuitParameters> {
    if same_value(value, base_value(kind, base)?) {
        return Ok(*base);
    }
    let mut p = *base;
    match kind {
        SweepKind::Temperature | SweepKind::NoiseModel => p.t_h = value,
        SweepKind::Gap => {
            let d = derive_parameters(base)?;
            let mean = 0.5 * (d.omega_h + d.omega_c);
            let half = 0.5 * value * d.omega_b;
            let (wh, wc) = (mean + half, mean - half);
            if !(wc > 0.0) {
                return Err(Error::Config(format!("gap {value} omega_b pushes the cold filter below zero")));
            }
            // C_Σf fixed, L_f moved; γ_f/ω_f fixed.
            p.l_h = 1.0 / (d.c_sigma_h * wh * wh);
            p.l_c = 1.0 / (d.c_sigma_c * wc * wc);
            p.damping_h = rescale(base.damping_h, wh / d.omega_h);
            p.damping_c = rescale(base.damping_c, wc / d.omega_c);
        }
        SweepKind::FilterQ => {
            p.damping_h = FilterDamping::QualityFactor(value);
            p.damping_c = FilterDamping::QualityFactor(value);
        }
    }
    p.validate()?;
    Ok(p)
}

fn rescale(d: FilterDamping, ratio: f64) -> FilterDamping {
    match d {
        FilterDamping::QualityFactor(q) => FilterDamping::QualityFactor(q),
        FilterDamping::Rate(g) => FilterDamping::Rate(g * ratio),
    }
}

/// Outcome of the analysis at one swept value. Infinite thresholds are stored as None.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub value: f64,
    pub model: PsdModel,
    /// Watts; zero when the valley has no stable points.
    pub max_power: f64,
    pub argmax: Option<PowerPoint>,
    /// η = P/|Q̇| at maximum power.
    pub efficiency: Option<f64>,
    /// Linear-model heat current from the hot bath, watts.
    pub heat_flow: Option<f64>,
    pub q_init: Option<f64>,
    pub q_stop: Option<f64>,
    /// Deepest value of Γ_tot(γ_b = 0) over the valley, in units of ω_b.
    pub valley_min: Option<f64>,
    pub stable_points: usize,
    pub error: Option<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Everything computed at one point, for the record and the CSV dumps.
pub struct PointResult {
    pub record: SweepRecord,
    pub curve: Option<DissipationCurve>,
    pub power: Vec<PowerPoint>,
}

/// Full γ_b = 0 analysis at one parameter set.
pub fn analyse_point(d: &DerivedParameters, value: f64, model: PsdModel, s: &PointSettings) -> Result<PointResult> {
    let mut curve_opts = s.curve;
    curve_opts.pressure = curve_opts.pressure.with_model(model);
    let amps = default_amplitude_grid(s.amplitude_points, s.a_max);
    let curve = dissipation_curve(d, &amps, 0.0, &curve_opts)?;
    let points = stable_point_power(d, &curve)?;
    let best = max_power(&points);
    let (qi, qs) = q_thresholds(d, &curve);
    let x = curve.noise_term();
    let valley_min = primary_valley(&x).map(|(_, i, _)| x[i] / d.omega_b);
    let heat = heat_flow(d, model, &HeatFlowOptions::default())?;
    let p = best.map_or(0.0, |b| b.power);
    let q = heat.q_dot.abs();
    let record = SweepRecord {
        value,
        model,
        max_power: p,
        argmax: best,
        efficiency: (q > 0.0).then(|| p / q),
        heat_flow: Some(heat.q_dot),
        q_init: finite(qi),
        q_stop: finite(qs),
        valley_min,
        stable_points: points.len(),
        error: None,
    };
    Ok(PointResult { record, curve: Some(curve), power: points })
}

/// Written once per output directory; a resumed sweep must match it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub spec: SweepSpec,
}

/// Writes `bytes` to `path` via a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Like [`write_atomic`] but leaves an identical file untouched.
fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(());
    }
    write_atomic(path, bytes)
}

fn point_stem(i: usize) -> String {
    format!("point_{i:03}")
}

fn curve_csv(c: &DissipationCurve, omega_b: f64) -> String {
    let mut s = String::from("A_b,gamma_tot_over_omega_b,pressure_re,pressure_im,dc_shift\n");
    for i in 0..c.amplitudes.len() {
        s += &format!(
            "{:e},{:e},{:e},{:e},{:e}\n",
            c.amplitudes[i],
            c.gamma_tot[i] / omega_b,
            c.noise_pressure[i].re,
            c.noise_pressure[i].im,
            c.dc_shift[i]
        );
    }
    s
}

fn power_csv(points: &[PowerPoint]) -> String {
    let mut s = String::from("Q_b,A_b,gamma_b,power_W\n");
    for p in points {
        s += &format!("{:e},{:e},{:e},{:e}\n", p.q_b, p.a_b, p.gamma_b, p.power);
    }
    s
}

fn load_record(path: &Path, value: f64) -> Option<SweepRecord> {
    let text = fs::read_to_string(path).ok()?;
    let r: SweepRecord = serde_json::from_str(&text).ok()?;
    same_value(r.value, value).then_some(r)
}

/// Runs (or resumes) a sweep; per-point failures are recorded and the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    let spec = spec.resolved()?;
    fs::create_dir_all(&spec.outputs)?;
    let manifest = Manifest { version: env!("CARGO_PKG_VERSION").to_string(), spec: spec.clone() };
    let manifest_path = spec.outputs.join("manifest.json");
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    if manifest_path.exists() {
        let old: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        if old != manifest {
            return Err(Error::Config(format!(
                "{} holds a different sweep; use a fresh output directory",
                spec.outputs.display()
            )));
        }
    } else {
        write_atomic(&manifest_path, manifest_json.as_bytes())?;
    }
    let model = spec.effective_model();
    let records: Vec<Result<SweepRecord>> = spec
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let json_path = spec.outputs.join(format!("{}.json", point_stem(i)));
            if let Some(r) = load_record(&json_path, value) {
                return Ok(r);
            }
            let outcome = apply(spec.kind, &spec.base, value)
                .and_then(|p| derive_parameters(&p))
                .and_then(|d| analyse_point(&d, value, model, &spec.settings).map(|r| (d, r)));
            let record = match outcome {
                Ok((d, r)) => {
                    if let Some(c) = &r.curve {
                        let path = spec.outputs.join(format!("{}_curve.csv", point_stem(i)));
                        write_atomic(&path, curve_csv(c, d.omega_b).as_bytes())?;
                    }
                    let path = spec.outputs.join(format!("{}_power.csv", point_stem(i)));
                    write_atomic(&path, power_csv(&r.power).as_bytes())?;
                    r.record
                }
                Err(e) => SweepRecord {
                    value,
                    model,
                    max_power: 0.0,
                    argmax: None,
                    efficiency: None,
                    heat_flow: None,
                    q_init: None,
                    q_stop: None,
                    valley_min: None,
                    stable_points: 0,
                    error: Some(e.to_string()),
                },
            };
            write_atomic(&json_path, serde_json::to_string_pretty(&record)?.as_bytes())?;
            Ok(record)
        })
        .collect();
    let records: Vec<SweepRecord> = records.into_iter().collect::<Result<_>>()?;
    write_if_changed(&spec.outputs.join("records.json"), serde_json::to_string_pretty(&records)?.as_bytes())?;
    let mut summary = String::from("value,max_power_W,Q_b,A_b,efficiency,heat_flow_W,Q_init,Q_stop,valley_min\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in &records {
        summary += &format!(
            "{:e},{:e},{},{},{},{},{},{},{}\n",
            r.value,
            r.max_power,
            opt(r.argmax.map(|p| p.q_b)),
            opt(r.argmax.map(|p| p.a_b)),
            opt(r.efficiency),
            opt(r.heat_flow),
            opt(r.q_init),
            opt(r.q_stop),
            opt(r.valley_min)
        );
    }
    write_if_changed(&spec.outputs.join("summary.csv"), summary.as_bytes())?;
    Ok(records)
}

/// Least-squares line y = slope·x + intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalComparison {
    pub quantum: Vec<SweepRecord>,
    pub classical: Vec<SweepRecord>,
    /// Classical max power against T_h over the points without errors.
    pub classical_fit: Option<LinearFit>,
}

/// Temperature sweep under both noise models, in `outputs/quantum` and `outputs/classical`.
pub fn run_classical_comparison(spec: &SweepSpec) -> Result<ClassicalComparison> {
    let q = SweepSpec {
        kind: SweepKind::Temperature,
        model: PsdModel::Quantum,
        outputs: spec.outputs.join("quantum"),
        ..spec.clone()
    };
    let c = SweepSpec { kind: SweepKind::NoiseModel, outputs: spec.outputs.join("classical"), ..spec.clone() };
    let quantum = run_sweep(&q)?;
    let classical = run_sweep(&c)?;
    let ok: Vec<&SweepRecord> = classical.iter().filter(|r| r.error.is_none()).collect();
    let fit = linear_fit(
        &ok.iter().map(|r| r.value).collect::<Vec<_>>(),
        &ok.iter().map(|r| r.max_power).collect::<Vec<_>>(),
    );
    let out = ClassicalComparison { quantum, classical, classical_fit: fit };
    write_if_changed(&spec.outputs.join("comparison.json"), serde_json::to_string_pretty(&out)?.as_bytes())?;
    Ok(out)
}
