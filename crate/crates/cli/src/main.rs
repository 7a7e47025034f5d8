//! `qhe`: command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use qhe_core::circuit::{derive_parameters, effective_frequency, CircuitParameters, DerivedParameters};
use qhe_core::greens::{auto_truncate, build_diagonals, default_probes, DriveState};
use qhe_core::oracle::{run_driven, run_linear, OracleConfig};
use qhe_core::slowdyn::{
    default_amplitude_grid, dissipation_curve, integrate_amplitude_phase, max_power, q_thresholds,
    stable_point_power, CurveOptions, PressureOptions, StepController,
};
use qhe_core::spectral::{FrequencyGrid, PsdModel, RefinementSpec, SpectralTables, SPECTRAL_CSV_HEADER};
use qhe_core::sweep::{run_classical_comparison, run_sweep, write_atomic, PointSettings, SweepKind, SweepSpec};
use qhe_core::thermo::{efficiency, heat_flow, otto_trajectory, HeatFlowOptions};
use qhe_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qhe", version, about = "Autonomous superconducting heat engine simulator")]
struct Cli {
    /// Parameter file (JSON); the reference design when omitted.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Base seed for stochastic runs.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Model::Quantum)]
    model: Model,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Quantum,
    Classical,
}

impl From<Model> for PsdModel {
    fn from(m: Model) -> Self {
        match m {
            Model::Quantum => PsdModel::Quantum,
            Model::Classical => PsdModel::Classical,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Derived parameters as JSON.
    Derive,
    Spectral {
        #[command(subcommand)]
        cmd: SpectralCmd,
    },
    Greens {
        #[command(subcommand)]
        cmd: GreensCmd,
    },
    Engine {
        #[command(subcommand)]
        cmd: EngineCmd,
    },
    Sweep {
        #[command(subcommand)]
        cmd: SweepCmd,
    },
    Oracle {
        #[command(subcommand)]
        cmd: OracleCmd,
    },
}

#[derive(Subcommand)]
enum SpectralCmd {
    /// Kernel, PSDs and static Green's function on the refined grid (spectral.csv).
    Dump {
        #[arg(long, default_value_t = 0.0)]
        phi_b: f64,
        /// Grid half-range in units of ω_s.
        #[arg(long, default_value_t = 2.0)]
        omega_max_factor: f64,
    },
}

#[derive(Subcommand)]
enum GreensCmd {
    /// Sideband coefficients G_n at the given angular frequencies (greens.json).
    Solve {
        #[arg(long)]
        a_b: f64,
        #[arg(long, default_value_t = 0.0)]
        theta_b: f64,
        /// Angular frequencies in rad/s, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        omega: Vec<f64>,
        /// Sideband cutoff; automatic when omitted.
        #[arg(long)]
        n_max: Option<usize>,
    },
}

#[derive(Args, Clone, Copy)]
struct CurveArgs {
    /// Number of amplitude samples.
    #[arg(long, default_value_t = 96)]
    points: usize,
    #[arg(long, default_value_t = 0.7)]
    a_max: f64,
}

#[derive(Subcommand)]
enum EngineCmd {
    /// Γ_tot(A_b) with stationary points, power and thresholds (curve.csv, curve.json).
    Curve {
        #[command(flatten)]
        curve: CurveArgs,
        /// Intrinsic quality factor of the slow resonator; γ_b = 0 when omitted.
        #[arg(long)]
        q_b: Option<f64>,
    },
    /// Amplitude/phase evolution (trajectory.csv).
    Evolve {
        #[arg(long)]
        a0: f64,
        #[arg(long, default_value_t = 0.0)]
        theta0: f64,
        #[arg(long)]
        q_b: f64,
        /// Duration in drive periods.
        #[arg(long, default_value_t = 1000.0)]
        periods: f64,
    },
    /// Heat flow and efficiencies at maximum power (thermo.json).
    Thermo {
        #[command(flatten)]
        curve: CurveArgs,
        /// Working-mode frequency for the heat estimate (rad/s).
        #[arg(long)]
        omega_a_eff: Option<f64>,
    },
    /// One period of the Otto cycle (cycle.csv, cycle.json).
    Cycle {
        #[arg(long)]
        a_b: f64,
        #[arg(long, default_value_t = 400)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Temperature,
    Gap,
    FilterQ,
    NoiseModel,
}

impl From<Kind> for SweepKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Temperature => SweepKind::Temperature,
            Kind::Gap => SweepKind::Gap,
            Kind::FilterQ => SweepKind::FilterQ,
            Kind::NoiseModel => SweepKind::NoiseModel,
        }
    }
}

#[derive(Subcommand)]
enum SweepCmd {
    /// Runs or resumes a sweep in --out.
    Run {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Swept values, comma separated (T_h in K, Δω in ω_b, or Q_f).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        curve: CurveArgs,
        /// Temperature sweep under both noise models with a linear fit of the classical power.
        #[arg(long)]
        compare_classical: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMode {
    Linear,
    Driven,
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Time-domain ensemble against the frequency-domain targets (oracle.json).
    Run {
        #[arg(long, value_enum)]
        mode: OracleMode,
        /// φ_b (linear) or A_b (driven) values, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        seeds: Option<usize>,
        /// log2 of the trace length.
        #[arg(long, default_value_t = 20)]
        log2_samples: u32,
        #[arg(long, default_value_t = 1100)]
        steps_per_period: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn load(cli: &Cli) -> Result<(CircuitParameters, DerivedParameters)> {
    let p = match &cli.params {
        Some(path) => CircuitParameters::from_path(path)?,
        None => CircuitParameters::table1(),
    };
    Ok((p, derive_parameters(&p)?))
}

fn save_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write_atomic(&dir.join(name), serde_json::to_string_pretty(value)?.as_bytes())
}

fn csv(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        s += &line.join(",");
        s.push('\n');
    }
    s
}

fn curve_options(model: PsdModel) -> CurveOptions {
    let mut c = CurveOptions::default();
    c.pressure = c.pressure.with_model(model);
    c
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cli.out)?;
    let model: PsdModel = cli.model.into();
    let (params, d) = load(&cli)?;
    let out = cli.out.clone();
    match cli.command {
        Command::Derive => {
            let v = json!({
                "derived": d,
                "omega_a_eff0": d.omega_a_eff0(),
                "gap_over_omega_b": d.gap() / d.omega_b,
                "regime_ordered": d.regime_ordered(),
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::Spectral { cmd: SpectralCmd::Dump { phi_b, omega_max_factor } } => {
            let spec = RefinementSpec { omega_max_factor, ..RefinementSpec::default() };
            let grid = FrequencyGrid::refined(&d, &spec)?;
            let t = SpectralTables::compute(&d, &grid, phi_b, model)?;
            let body = csv(&SPECTRAL_CSV_HEADER, t.csv_rows().map(|r| r.to_vec()));
            write_atomic(&out.join("spectral.csv"), body.as_bytes())?;
            println!("{}", json!({ "points": grid.len(), "file": out.join("spectral.csv") }));
        }
        Command::Greens { cmd: GreensCmd::Solve { a_b, theta_b, omega, n_max } } => {
            let drive = DriveState::new(a_b, theta_b)?;
            let n = match n_max {
                Some(n) => n,
                None => auto_truncate(&d, &drive, &default_probes(&d)?)?,
            };
            let mut rows = Vec::new();
            for w in omega {
                let (g, stats) = build_diagonals(&d, &drive, w, n)?.solve()?;
                let coeffs: Vec<(i64, Complex64)> =
                    g.iter().enumerate().map(|(i, z)| (i as i64 - n as i64, *z)).collect();
                rows.push(json!({
                    "omega": w,
                    "residual": stats.residual,
                    "growth": stats.growth,
                    "pivoted": stats.pivoted,
                    "coefficients": coeffs,
                }));
            }
            let v = json!({ "a_b": a_b, "theta_b": theta_b, "n_max": n, "solutions": rows });
            save_json(&out, "greens.json", &v)?;
            println!("{}", json!({ "n_max": n, "file": out.join("greens.json") }));
        }
        Command::Engine { cmd } => engine(cmd, &d, model, &out)?,
        Command::Sweep { cmd: SweepCmd::Run { kind, values, curve, compare_classical } } => {
            let settings = PointSettings { amplitude_points: curve.points, a_max: curve.a_max, ..PointSettings::default() };
            let spec = SweepSpec { kind: kind.into(), values, base: params, model, outputs: out.clone(), settings };
            if compare_classical {
                let c = run_classical_comparison(&spec)?;
                println!("{}", serde_json::to_string_pretty(&json!({ "classical_fit": c.classical_fit }))?);
            } else {
                let records = run_sweep(&spec)?;
                let short: Vec<_> = records
                    .iter()
                    .map(|r| json!({ "value": r.value, "max_power": r.max_power, "error": r.error }))
                    .collect();
                println!("{}", serde_json::to_string_pretty(&short)?);
            }
        }
        Command::Oracle { cmd: OracleCmd::Run { mode, values, seeds, log2_samples, steps_per_period } } => {
            let base = match mode {
                OracleMode::Linear => OracleConfig::linear(),
                OracleMode::Driven => OracleConfig::driven(),
            };
            let cfg = OracleConfig {
                seeds: seeds.unwrap_or(base.seeds),
                n_samples: 1usize << log2_samples,
                steps_per_period,
                base_seed: cli.seed,
                model,
            };
            let mut reports = Vec::new();
            for v in values {
                let r = match mode {
                    OracleMode::Linear => serde_json::to_value(run_linear(&d, v, &cfg)?)?,
                    OracleMode::Driven => serde_json::to_value(run_driven(
                        &d,
                        &DriveState::amplitude(v)?,
                        &cfg,
                        &PressureOptions::default(),
                    )?)?,
                };
                reports.push(r);
            }
            let v = json!({ "config": cfg, "reports": reports });
            save_json(&out, "oracle.json", &v)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}

fn engine(cmd: EngineCmd, d: &DerivedParameters, model: PsdModel, out: &Path) -> Result<()> {
    match cmd {
        EngineCmd::Curve { curve, q_b } => {
            let gamma_b = q_b.map_or(0.0, |q| d.omega_b / q);
            let c = dissipation_curve(d, &default_amplitude_grid(curve.points, curve.a_max), gamma_b, &curve_options(model))?;
            let body = csv(
                &["A_b", "gamma_tot", "gamma_tot_over_omega_b", "pressure_re", "pressure_im", "dc_shift"],
                (0..c.amplitudes.len()).map(|i| {
                    vec![
                        c.amplitudes[i],
                        c.gamma_tot[i],
                        c.gamma_tot[i] / d.omega_b,
                        c.noise_pressure[i].re,
                        c.noise_pressure[i].im,
                        c.dc_shift[i],
                    ]
                }),
            );
            write_atomic(&out.join("curve.csv"), body.as_bytes())?;
            let mut summary = json!({ "gamma_b": gamma_b, "stationary_points": c.stationary_points });
            if gamma_b == 0.0 {
                let pts = stable_point_power(d, &c)?;
                let (qi, qs) = q_thresholds(d, &c);
                summary["power_points"] = serde_json::to_value(&pts)?;
                summary["max_power"] = serde_json::to_value(max_power(&pts))?;
                summary["q_init"] = json!(qi.is_finite().then_some(qi));
                summary["q_stop"] = json!(qs.is_finite().then_some(qs));
            }
            save_json(out, "curve.json", &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        EngineCmd::Evolve { a0, theta0, q_b, periods } => {
            let tr = integrate_amplitude_phase(
                d,
                DriveState::new(a0, theta0)?,
                d.omega_b / q_b,
                periods * d.tau_b,
                &StepController::default(),
                &PressureOptions::default().with_model(model),
            )?;
            let body = csv(&["t", "A_b", "theta_b"], tr.samples.iter().map(|s| vec![s.t, s.a_b, s.theta_b]));
            write_atomic(&out.join("trajectory.csv"), body.as_bytes())?;
            let last = tr.last();
            let v = json!({
                "final": last,
                "steps": tr.samples.len() - 1,
                "rejected_steps": tr.rejected_steps,
                "pressure_evaluations": tr.pressure_evaluations,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        EngineCmd::Thermo { curve, omega_a_eff } => {
            let c = dissipation_curve(d, &default_amplitude_grid(curve.points, curve.a_max), 0.0, &curve_options(model))?;
            let pts = stable_point_power(d, &c)?;
            let best = max_power(&pts);
            let opts = HeatFlowOptions { omega_a_eff, ..HeatFlowOptions::default() };
            let report = heat_flow(d, model, &opts)?;
            let range = match (pts.first(), pts.last()) {
                (Some(a), Some(b)) => (a.a_b, b.a_b),
                _ => (0.0, 0.0),
            };
            let eff = efficiency(d, best.map_or(0.0, |b| b.power), &report, range)?;
            let v = json!({ "max_power": best, "heat_flow": report, "efficiency": eff, "stable_range": range });
            save_json(out, "thermo.json", &v)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        EngineCmd::Cycle { a_b, samples } => {
            let tr = otto_trajectory(d, a_b, samples, &PressureOptions::default().with_model(model))?;
            let body = csv(
                &["t", "phi_b", "omega_a_eff", "n_a", "E_a_ind", "phi_s_sq"],
                (0..tr.times.len()).map(|i| {
                    vec![tr.times[i], tr.phi_b[i], tr.omega_a_eff[i], tr.n_a[i], tr.e_a_ind[i], tr.phi_s_sq[i]]
                }),
            );
            write_atomic(&out.join("cycle.csv"), body.as_bytes())?;
            let v = json!({
                "a_b": a_b,
                "loop_area": tr.loop_area,
                "normalized_area": tr.normalized_area,
                "phase_shift": tr.phase_shift,
                "closure_error": tr.closure_error,
                "omega_a_eff_range": [effective_frequency(d, 2.0 * a_b)?, effective_frequency(d, -2.0 * a_b)?],
            });
            save_json(out, "cycle.json", &v)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(())
}
