mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::SystemTime;

use common::coarse_options;
use qhe_core::circuit::{derive_parameters, CircuitParameters};
use qhe_core::error::Error;
use qhe_core::slowdyn::CurveOptions;
use qhe_core::spectral::PsdModel;
use qhe_core::sweep::{analyse_point, base_value, run_sweep, PointSettings, SweepKind, SweepRecord, SweepSpec};

fn quick_settings() -> PointSettings {
    PointSettings {
        amplitude_points: 16,
        a_max: 0.6,
        curve: CurveOptions { pressure: coarse_options(), refine_roots: false },
    }
}

fn spec(kind: SweepKind, values: Vec<f64>, out: &Path) -> SweepSpec {
    SweepSpec {
        kind,
        values,
        base: CircuitParameters::table1(),
        model: PsdModel::Quantum,
        outputs: out.to_path_buf(),
        settings: quick_settings(),
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, (Vec<u8>, SystemTime)> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().into_string().unwrap();
            (name, (fs::read(e.path()).unwrap(), e.metadata().unwrap().modified().unwrap()))
        })
        .collect()
}

#[test]
fn completed_sweep_is_a_no_op_and_resumes_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(SweepKind::Temperature, vec![0.2], dir.path());
    let first = run_sweep(&s).unwrap();
    assert_eq!(first.len(), 2);
    let before = snapshot(dir.path());
    assert!(before.contains_key("manifest.json") && before.contains_key("point_001_curve.csv"));
    assert!(!before.keys().any(|k| k.ends_with(".tmp")));

    let again = run_sweep(&s).unwrap();
    assert_eq!(first, again);
    assert_eq!(before, snapshot(dir.path()));

    // A crash after the first point: its files survive, the rest is missing.
    for name in ["point_001.json", "point_001_curve.csv", "point_001_power.csv", "records.json", "summary.csv"] {
        fs::remove_file(dir.path().join(name)).unwrap();
    }
    let resumed = run_sweep(&s).unwrap();
    assert_eq!(first, resumed);
    let after = snapshot(dir.path());
    assert_eq!(before.keys().collect::<Vec<_>>(), after.keys().collect::<Vec<_>>());
    for (k, (bytes, _)) in &before {
        assert_eq!(bytes, &after[k].0, "{k} differs after resume");
    }
}

#[test]
fn resuming_a_different_sweep_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&spec(SweepKind::Temperature, vec![0.3], dir.path())).unwrap();
    let err = run_sweep(&spec(SweepKind::Temperature, vec![0.2], dir.path())).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn failed_points_are_recorded_and_the_sweep_continues() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_sweep(&spec(SweepKind::FilterQ, vec![-5.0], dir.path())).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records[0].error.is_some() && records[0].max_power == 0.0);
    assert!(records[1].error.is_none() && records[1].max_power > 0.0);
}

fn same_physics(a: &SweepRecord, b: &SweepRecord) {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-6 * x.abs().max(y.abs());
    assert!(close(a.max_power, b.max_power), "{} vs {}", a.max_power, b.max_power);
    assert!(close(a.heat_flow.unwrap(), b.heat_flow.unwrap()));
    assert!(close(a.q_init.unwrap(), b.q_init.unwrap()));
    assert!(close(a.q_stop.unwrap(), b.q_stop.unwrap()));
    assert_eq!(a.stable_points, b.stable_points);
}

#[test]
fn base_point_agrees_across_sweep_kinds() {
    let base = CircuitParameters::table1();
    let mut base_records = Vec::new();
    for kind in [SweepKind::Temperature, SweepKind::Gap, SweepKind::FilterQ] {
        let dir = tempfile::tempdir().unwrap();
        let b = base_value(kind, &base).unwrap();
        let records = run_sweep(&spec(kind, vec![b], dir.path())).unwrap();
        assert_eq!(records.len(), 1);
        base_records.push(records[0].clone());
    }
    same_physics(&base_records[0], &base_records[1]);
    same_physics(&base_records[0], &base_records[2]);
}

#[test]
fn quantum_and_classical_power_converge_at_high_temperature() {
    let mut p = CircuitParameters::table1();
    p.t_h = 12.0;
    let d = derive_parameters(&p).unwrap();
    let x = qhe_core::constants::HBAR * d.omega_h / (qhe_core::constants::K_B * p.t_h);
    assert!(x < 0.05);
    let settings = PointSettings { amplitude_points: 48, ..PointSettings::default() };
    let q = analyse_point(&d, p.t_h, PsdModel::Quantum, &settings).unwrap().record;
    let c = analyse_point(&d, p.t_h, PsdModel::Classical, &settings).unwrap().record;
    assert!(q.max_power > 0.0);
    assert!((q.max_power / c.max_power - 1.0).abs() < 0.10, "quantum {:e} vs classical {:e}", q.max_power, c.max_power);
}
