//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use qhe_core::circuit::{derive_parameters, effective_frequency, CircuitParameters, DerivedParameters};
use qhe_core::constants::PHI0;
use qhe_core::greens::DriveState;
use qhe_core::oracle::{run_driven, run_linear, OracleConfig};
use qhe_core::slowdyn::{
    default_amplitude_grid, dissipation_curve, max_power, primary_valley, stable_point_power, CurveOptions,
    DissipationCurve, PressureOptions,
};
use qhe_core::spectral::PsdModel;
use qhe_core::sweep::{base_value, run_classical_comparison, run_sweep, PointSettings, SweepKind, SweepRecord, SweepSpec};
use qhe_core::thermo::{efficiency, heat_flow, otto_trajectory, HeatFlowOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

fn curve(d: &DerivedParameters) -> DissipationCurve {
    let opts = CurveOptions { refine_roots: false, ..CurveOptions::default() };
    dissipation_curve(d, &default_amplitude_grid(96, 0.7), 0.0, &opts).expect("dissipation curve")
}

fn criterion_1() -> Outcome {
    let d = table1();
    let ghz = |w: f64| w / (2.0 * PI * 1e9);
    let wa0 = effective_frequency(&d, 0.0).unwrap();
    let checks = [
        ("L_J/nH", d.l_j * 1e9, 1.36),
        ("N_L", d.n_l, 0.103),
        ("f_a/GHz", ghz(d.omega_a), 15.0),
        ("f_s/GHz", ghz(d.omega_s), 20.2),
        ("f_b/MHz", ghz(d.omega_b) * 1e3, 379.0),
        ("f_a'(0)/GHz", ghz(wa0), 10.03),
        ("phi_g0/Phi0", d.phi_g0 / PHI0, 0.45),
    ];
    let pass = checks.iter().all(|&(_, v, t)| within(v, t, 0.02));
    let detail = checks.iter().map(|(n, v, t)| format!("{n} {v:.4} (ref {t})")).collect::<Vec<_>>().join(", ");
    outcome(pass, detail)
}

fn criterion_2(d: &DerivedParameters, c: &DissipationCurve) -> Outcome {
    let x = c.noise_term();
    let Some((_, i_min, _)) = primary_valley(&x) else {
        return outcome(false, "no primary valley".into());
    };
    let gamma_b = d.omega_b / 13600.0;
    let g = gamma_b + x[i_min];
    outcome(g < 0.0, format!("min Gamma_tot = {:.3e} rad/s = {:.3} gamma_b at A_b = {:.3}", g, g / gamma_b, c.amplitudes[i_min]))
}

fn criterion_3(d: &DerivedParameters, c: &DissipationCurve) -> Outcome {
    let pts = stable_point_power(d, c).unwrap();
    let Some(best) = max_power(&pts) else {
        return outcome(false, "no stable point".into());
    };
    let heat = heat_flow(d, PsdModel::Quantum, &HeatFlowOptions::default()).unwrap();
    let a_lo = pts.iter().map(|p| p.a_b).fold(f64::INFINITY, f64::min);
    let a_hi = pts.iter().map(|p| p.a_b).fold(f64::NEG_INFINITY, f64::max);
    let e = efficiency(d, best.power, &heat, (a_lo, a_hi)).unwrap();
    let eta_ok = e.efficiency < 0.01;
    let carnot_ok = (e.eta_carnot - 0.967).abs() <= 1e-3;
    let otto_ok = e.eta_otto_min >= 0.10 && e.eta_otto_max <= 0.50;
    outcome(
        eta_ok && carnot_ok && otto_ok,
        format!(
            "eta = {:.4} [{}] (P = {:.3e} W, Qdot = {:.3e} W; P/gross exchange = {:.2e}), eta_C = {:.4} [{}], eta_O over A_b in [{:.3}, {:.3}] = [{:.3}, {:.3}] [{}]",
            e.efficiency,
            ok(eta_ok),
            best.power,
            heat.q_dot,
            best.power / heat.gross_exchange,
            e.eta_carnot,
            ok(carnot_ok),
            a_lo,
            a_hi,
            e.eta_otto_min,
            e.eta_otto_max,
            ok(otto_ok)
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut p = CircuitParameters::table1();
    p.t_h = 0.400;
    let d = derive_parameters(&p).unwrap();
    let c = curve(&d);
    let best = max_power(&stable_point_power(&d, &c).unwrap());
    let power = best.map_or(0.0, |b| b.power);
    let aw = power * 1e18;
    let pass = aw >= 10.0 / 3.0 && aw <= 30.0;
    let at = best.map_or(String::new(), |b| format!(" at A_b = {:.3}, Q_b = {:.0}", b.a_b, b.q_b));
    outcome(pass, format!("P_max(T_h = 400 mK) = {aw:.2} aW{at}, accepted [3.33, 30] aW"))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn powers(r: &[SweepRecord]) -> String {
    r.iter().map(|r| format!("{:.3}:{:.3e}", r.value, r.max_power)).collect::<Vec<_>>().join(" ")
}

fn sweep_spec(kind: SweepKind, values: &[f64], out: &std::path::Path) -> SweepSpec {
    SweepSpec {
        kind,
        values: values.to_vec(),
        base: CircuitParameters::table1(),
        model: PsdModel::Quantum,
        outputs: out.to_path_buf(),
        settings: PointSettings::default(),
    }
}

/// Vertex of the parabola through the largest sample and its neighbours.
fn peak_location(r: &[SweepRecord]) -> Option<f64> {
    let k = (0..r.len()).max_by(|&a, &b| r[a].max_power.total_cmp(&r[b].max_power))?;
    if k == 0 || k + 1 == r.len() {
        return None;
    }
    let (x0, x1, x2) = (r[k - 1].value, r[k].value, r[k + 1].value);
    let (y0, y1, y2) = (r[k - 1].max_power, r[k].max_power, r[k + 1].max_power);
    let den = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
    Some(-b / (2.0 * a))
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;

    let temps = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5];
    let cmp = run_classical_comparison(&sweep_spec(SweepKind::Temperature, &temps, &dir.path().join("temperature")))
        .unwrap();
    let q = &cmp.quantum;
    let at = |r: &[SweepRecord], v: f64| r.iter().find(|r| (r.value - v).abs() < 1e-9).map_or(f64::NAN, |r| r.max_power);
    let monotone = q.windows(2).all(|w| w[1].max_power > w[0].max_power) && q.iter().all(|r| r.error.is_none());
    let steep = at(q, 0.1) / at(q, 0.3);
    let a_ok = monotone && steep < 0.05;
    pass &= a_ok;
    parts.push(format!("(a) [{}] monotone {monotone}, P(0.1 K)/P(0.3 K) = {steep:.3}; {}", ok(a_ok), powers(q)));

    // Gap values are in units of ω_b.
    let base = CircuitParameters::table1();
    let gaps = [6.0, 7.0, 7.5, 8.0, 8.5, 9.0, 9.5, 10.0, 11.0];
    let g = run_sweep(&sweep_spec(SweepKind::Gap, &gaps, &dir.path().join("gap"))).unwrap();
    let peak = peak_location(&g);
    let b_ok = peak.is_some_and(|p| (p - 8.6).abs() <= 0.5);
    pass &= b_ok;
    parts.push(format!(
        "(b) [{}] peak at {} omega_b (base gap {:.3}); {}",
        ok(b_ok),
        peak.map_or("boundary".to_string(), |p| format!("{p:.2}")),
        base_value(SweepKind::Gap, &base).unwrap(),
        powers(&g)
    ));

    let qs = [1.0, 3.0, 10.0, 30.0, 85.0, 200.0, 400.0];
    let f = run_sweep(&sweep_spec(SweepKind::FilterQ, &qs, &dir.path().join("filter_q"))).unwrap();
    let k = (0..f.len()).max_by(|&a, &b| f[a].max_power.total_cmp(&f[b].max_power)).unwrap();
    let rise = f[..=k].windows(2).all(|w| w[1].max_power >= w[0].max_power);
    let fall = f[k..].windows(2).all(|w| w[1].max_power <= w[0].max_power);
    let c_ok = at(&f, 1.0) == 0.0 && k > 0 && k + 1 < f.len() && rise && fall;
    pass &= c_ok;
    parts.push(format!("(c) [{}] P(Q_f = 1) = {:e}, peak at Q_f = {}; {}", ok(c_ok), at(&f, 1.0), f[k].value, powers(&f)));

    let fit = cmp.classical_fit;
    let d_ok = fit.is_some_and(|f| f.r_squared > 0.99) && cmp.classical.iter().all(|r| r.error.is_none());
    pass &= d_ok;
    parts.push(format!(
        "(d) [{}] classical R^2 = {:.5}, slope {:.3e} W/K, classical/quantum at 0.3 K = {:.2}; {}",
        ok(d_ok),
        fit.map_or(f64::NAN, |f| f.r_squared),
        fit.map_or(f64::NAN, |f| f.slope),
        at(&cmp.classical, 0.3) / at(q, 0.3),
        powers(&cmp.classical)
    ));
    outcome(pass, parts.join("\n      "))
}

fn criterion_6(d: &DerivedParameters) -> Outcome {
    let cfg = OracleConfig::linear();
    let mut pass = true;
    let mut parts = Vec::new();
    for phi_b in [-0.27, 0.0, 0.27] {
        let r = run_linear(d, phi_b, &cfg).unwrap();
        pass &= r.pass;
        parts.push(format!(
            "phi_b {phi_b:+.2}: {:.5e} vs {:.5e} (rel {:.4}, se {:.4})",
            r.estimate,
            r.target,
            r.rel_error,
            r.std_error / r.target
        ));
    }
    outcome(pass, format!("{} seeds x 2^{}: {}", cfg.seeds, cfg.n_samples.trailing_zeros(), parts.join("; ")))
}

fn criterion_7(d: &DerivedParameters, c: &DissipationCurve) -> Outcome {
    let cfg = OracleConfig::driven();
    let x = c.noise_term();
    let (start, _, end) = primary_valley(&x).unwrap();
    let (a_lo, a_hi) = (c.amplitudes[start], c.amplitudes[end]);
    let mut pass = true;
    let mut parts = vec![format!("primary valley A_b in [{a_lo:.3}, {a_hi:.3}]")];
    for a in [0.43, 0.6] {
        let inside = a >= a_lo && a <= a_hi;
        let r = run_driven(d, &DriveState::amplitude(a).unwrap(), &cfg, &PressureOptions::default()).unwrap();
        pass &= r.pass && r.sign_consistent;
        parts.push(format!(
            "A_b {a} ({}): {:.4e} vs {:.4e} (rel {:.4}, sign ok {})",
            if inside { "in valley" } else { "outside" },
            r.estimate,
            r.target,
            r.rel_error,
            r.sign_consistent
        ));
    }
    outcome(pass, format!("{} seeds: {}", cfg.seeds, parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let config = Config { cases: 1000, failure_persistence: None, ..Config::default() };
    let mut failures = Vec::new();
    let mut run = |name: &str, s: &dyn Fn(&mut TestRunner) -> Result<(), String>| {
        let mut runner = TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm));
        if let Err(e) = s(&mut runner) {
            failures.push(format!("{name}: {e}"));
        }
    };
    let wrap = |f: fn(&Draw) -> Result<(), String>, a_max: f64| {
        move |r: &mut TestRunner| {
            r.run(&draw_strategy(a_max), |d| f(&d).map_err(TestCaseError::fail)).map_err(|e| e.to_string())
        }
    };
    run("spectral symmetries", &wrap(check_spectral, 0.6));
    run("sideband symmetry and residual", &wrap(check_sidebands, 0.6));
    run("gauge invariance", &wrap(check_gauge, 0.6));
    run("cycle closure, positivity, first harmonic", &wrap(check_cycle, 0.45));
    run("carnot", &|r: &mut TestRunner| {
        let s = (1e-3..1.0f64, 1.0..100.0f64).prop_map(|(t, k)| (t, t * k));
        r.run(&s, |(t_c, t_h)| check_carnot(t_c, t_h).map_err(TestCaseError::fail)).map_err(|e| e.to_string())
    });
    let pass = failures.is_empty();
    outcome(pass, if pass { "5 properties x 1000 draws".into() } else { failures.join("; ") })
}

fn criterion_9(d: &DerivedParameters) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [0.40, 0.43, 0.46] {
        let c = otto_trajectory(d, a, 400, &PressureOptions::default()).unwrap();
        let n_span = c.n_a.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - c.n_a.iter().cloned().fold(f64::INFINITY, f64::min);
        let good = c.closure_error < 1e-12
            && c.loop_area > 0.0
            && c.normalized_area > 0.05
            && c.phase_shift.abs() > 0.1
            && c.phase_shift.abs() < PI - 0.1;
        pass &= good;
        parts.push(format!(
            "A_b {a}: area {:.3e} (normalized {:.3}), phase {:.3} rad, n_a span {:.3}, closure {:.1e}",
            c.loop_area, c.normalized_area, c.phase_shift, n_span, c.closure_error
        ));
    }
    outcome(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {n} [{}] {name} ({secs:.1} s)\n      {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o, secs));
    };
    let d = table1();
    timed(1, "derived-parameter regression", &mut criterion_1);
    let c = curve(&d);
    timed(2, "negative dissipation at Q_b = 13600", &mut || criterion_2(&d, &c));
    timed(3, "efficiency bounds", &mut || criterion_3(&d, &c));
    timed(4, "power scale at 400 mK", &mut criterion_4);
    timed(5, "sweep morphology", &mut criterion_5);
    timed(6, "linear oracle equivalence", &mut || criterion_6(&d));
    timed(7, "driven oracle equivalence", &mut || criterion_7(&d, &c));
    timed(8, "invariant suite", &mut criterion_8);
    timed(9, "Otto cycle", &mut || criterion_9(&d));
    println!();
    for (n, name, o, secs) in &results {
        println!("criterion {n}: {} {name} ({secs:.1} s)", if o.pass { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
