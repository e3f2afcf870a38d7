//! Command-line front end.

use crate::collision::{collide, CollisionAngles};
use crate::config::{self, ConfigError, RunConfig};
use crate::diagnostics::{
    self, default_lambda_grid, marginal_uniqueness_check, maxwellian_invariance_check,
    tanaka_symmetry_check, weak_form_residual, DiagnosticsReport, TestFunction, Thresholds,
};
use crate::format::{self, FormatError};
use crate::measures::Ensemble;
use crate::picard::{self, Outcome, PicardError};
use crate::rng::{self, tag};
use crate::simulator::{simulate, Mode, SimError};
use crate::vec3::Vec3;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const MANIFEST: &str = "manifest.json";
pub const PATHS_FILE: &str = "paths.ensk";
pub const EVENTS_FILE: &str = "events.csv";

#[derive(Debug, Parser)]
#[command(
    name = "enskog",
    version,
    about = "Event-driven simulation of the Enskog jump process"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply one elastic collision and print the result as JSON.
    Collide(CollideArgs),
    /// Run a simulation from a config file or a previous manifest.
    Simulate(SimulateArgs),
    /// Run the Picard iteration to tolerance.
    Picard(PicardArgs),
    /// Run diagnostics over a stored simulation.
    Diagnose(DiagnoseArgs),
    /// Check kernel hypotheses of a config.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct CollideArgs {
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec3)]
    pub u: Vec3,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vec3)]
    pub v: Vec3,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub phi: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(
        long,
        conflicts_with = "manifest",
        required_unless_present = "manifest"
    )]
    pub config: Option<PathBuf>,
    /// Rerun the configuration echoed in a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PicardArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Write every iterate's path law as an ENSK1 file.
    #[arg(long)]
    pub save_laws: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Output directory of a `simulate` run.
    #[arg(long)]
    pub run: PathBuf,
    /// Second run of the same config for the uniqueness check.
    #[arg(long)]
    pub against: Option<PathBuf>,
    /// Comma-separated subset of maxwellian, tanaka, weak_form, uniqueness.
    #[arg(long, value_delimiter = ',')]
    pub checks: Option<Vec<String>>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 3.0)]
    pub z: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Config file; the defaults are validated when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut c = [0.0; 3];
    for (slot, p) in c.iter_mut().zip(&parts) {
        *slot = p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
        if !slot.is_finite() {
            return Err(format!("{p:?} is not finite"));
        }
    }
    Ok(Vec3::from_array(c))
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::validation(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ConfigInvalid(_)
            | SimError::HypothesesFailed(_)
            | SimError::FrozenLawMissing => Failure::validation(e.to_string()),
            SimError::RateOverflow { .. } | SimError::Path(_) => Failure::runtime(e.to_string()),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e.to_string())
    }
}

impl From<diagnostics::DiagnosticsError> for Failure {
    fn from(e: diagnostics::DiagnosticsError) -> Self {
        Failure::validation(e.to_string())
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return f.code;
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("ENSKOG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure {
            code: EXIT_USAGE,
            message: format!("ENSKOG_THREADS must be a positive integer, got {v:?}"),
        })?;
    // a pool may already exist when called from tests
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn run(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Collide(a) => cmd_collide(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Picard(a) => cmd_picard(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

fn vec_json(v: Vec3) -> Value {
    json!([v.x, v.y, v.z])
}

pub fn cmd_collide(a: &CollideArgs) -> Result<i32, Failure> {
    let xi = CollisionAngles::new(a.theta, a.phi).map_err(|e| Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    })?;
    let out = collide(a.u, a.v, xi);
    let momentum = (out.u_star + out.v_star) - (a.u + a.v);
    let e0 = a.u.norm_sq() + a.v.norm_sq();
    let e1 = out.u_star.norm_sq() + out.v_star.norm_sq();
    let report = json!({
        "u_star": vec_json(out.u_star),
        "v_star": vec_json(out.v_star),
        "alpha": vec_json(out.alpha),
        "n": vec_json(out.n),
        "momentum_residual": vec_json(momentum),
        "energy_residual": e1 - e0,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    Ok(EXIT_OK)
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(config::parse_str(&text, base)?)
}

fn load_manifest(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn config_from_manifest(path: &Path) -> Result<RunConfig, Failure> {
    let manifest = load_manifest(path)?;
    let map: BTreeMap<String, String> = manifest
        .get("config")
        .and_then(Value::as_object)
        .ok_or_else(|| Failure::validation(format!("{}: no config object", path.display())))?
        .iter()
        .map(|(k, v)| {
            (
                k.clone(),
                v.as_str().map_or_else(|| v.to_string(), str::to_string),
            )
        })
        .collect();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = config::from_map(&map, base)?;
    cfg.out_dir = base.to_path_buf();
    Ok(cfg)
}

fn snapshot_name(k: usize) -> String {
    format!("snapshot_{k:03}.ensk")
}

fn seeds_json(master: u64) -> Value {
    json!({
        "master": master,
        "initial_velocity": rng::derive(master, tag::INITIAL_VELOCITY),
        "initial_position": rng::derive(master, tag::INITIAL_POSITION),
        "dynamics": rng::derive(master, tag::DYNAMICS),
    })
}

fn write_manifest(dir: &Path, manifest: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(manifest).expect("json");
    text.push('\n');
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let mut cfg = match (&a.config, &a.manifest) {
        (Some(c), _) => load_config(c)?,
        (None, Some(m)) => config_from_manifest(m)?,
        (None, None) => unreachable!("clap requires one of --config/--manifest"),
    };
    if let Some(d) = &a.out_dir {
        cfg.out_dir = d.clone();
    }
    let report = cfg.sim.validation_report();
    if !report.passed() {
        eprintln!("{report}");
        return Err(Failure::validation("kernel hypotheses violated"));
    }
    let frozen = match (cfg.sim.mode, &cfg.frozen_law) {
        (Mode::Frozen, Some(p)) => Some(format::load(p)?),
        (Mode::Frozen, None) => return Err(SimError::FrozenLawMissing.into()),
        _ => None,
    };
    let out = simulate(&cfg.sim, frozen.as_ref())?;

    let dir = &cfg.out_dir;
    fs::create_dir_all(dir)?;
    let mut snapshots = Vec::new();
    for (k, &t) in cfg.sim.output_times.iter().enumerate() {
        let name = snapshot_name(k);
        format::save(
            &out.paths
                .snapshot(t)
                .map_err(|e| Failure::runtime(e.to_string()))?,
            &dir.join(&name),
        )?;
        snapshots.push(json!({ "t": t, "file": name }));
    }
    format::save(&out.paths, &dir.join(PATHS_FILE))?;
    write_events(&dir.join(EVENTS_FILE), &out.events)?;
    let stopping: Vec<Value> = out.stopping.iter().map(|s| json!(s.tau_j)).collect();
    let manifest = json!({
        "command": "simulate",
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.to_map(),
        "seeds": seeds_json(cfg.sim.master_seed),
        "event_counts": {
            "candidates": out.candidate_count(),
            "accepted": out.accepted_count(),
        },
        "stopping_times": stopping,
        "outputs": {
            "paths": PATHS_FILE,
            "events": EVENTS_FILE,
            "snapshots": snapshots,
        },
        "timing": { "wall_seconds": started.elapsed().as_secs_f64() },
    });
    write_manifest(dir, &manifest)?;
    println!(
        "simulated {} particles to T = {}: {} candidates, {} accepted; outputs in {}",
        cfg.sim.particle_count,
        cfg.sim.horizon,
        out.candidate_count(),
        out.accepted_count(),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn write_events(path: &Path, events: &[crate::simulator::JumpEvent]) -> Result<(), Failure> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "time,particle,accepted,dv_norm")?;
    for e in events {
        writeln!(
            w,
            "{:.16e},{},{},{:.16e}",
            e.time,
            e.particle_index,
            u8::from(e.accepted),
            e.delta_v.norm()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_picard(a: &PicardArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let mut run_cfg = load_config(&a.config)?;
    if let Some(d) = &a.out_dir {
        run_cfg.out_dir = d.clone();
    }
    let mut cfg = run_cfg.picard_config();
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    if let Some(n) = a.max_iters {
        cfg.max_iters = n;
    }
    let report = match picard::run_to_tolerance(&cfg) {
        Ok(r) => r,
        Err(PicardError::TolBelowNoise { tol, noise_se }) => {
            return Err(Failure {
                code: EXIT_USAGE,
                message: format!(
                    "refusing tol = {tol}: the Monte Carlo noise of the law distance is about {noise_se:.3e}, \
                     so tolerances at or below {:.3e} cannot be resolved; raise tol or n_particles",
                    3.0 * noise_se
                ),
            })
        }
        Err(PicardError::Sim(e)) => return Err(e.into()),
        Err(PicardError::ConfigInvalid(m)) => return Err(Failure::validation(m)),
        Err(e) => return Err(Failure::runtime(e.to_string())),
    };
    let dir = &run_cfg.out_dir;
    fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    picard::write_csv(&report.states, &mut csv)?;
    fs::write(dir.join("picard.csv"), csv)?;
    let mut laws = Vec::new();
    if a.save_laws {
        for s in &report.states {
            let name = format!("iterate_{:03}.ensk", s.index);
            format::save(&s.law, &dir.join(&name))?;
            laws.push(name);
        }
    }
    let (converged, iterations) = match report.outcome {
        Outcome::Converged { iterations } => (true, iterations),
        Outcome::NoConvergence { max_iters } => (false, max_iters),
    };
    let mut config_echo = run_cfg.to_map();
    config_echo.insert("picard.tol".into(), format!("{:?}", cfg.tol));
    config_echo.insert("picard.max_iters".into(), cfg.max_iters.to_string());
    let manifest = json!({
        "command": "picard",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config_echo,
        "seeds": (0..report.states.len()).map(|n| cfg.iterate_seed(n)).collect::<Vec<_>>(),
        "converged": converged,
        "iterations": iterations,
        "noise_se": report.noise_se,
        "envelope": report.envelope,
        "moments_bounded": report.moments_bounded(),
        "outputs": { "csv": "picard.csv", "laws": laws },
        "timing": { "wall_seconds": started.elapsed().as_secs_f64() },
    });
    write_manifest(dir, &manifest)?;
    if converged {
        println!(
            "converged after {iterations} iterations (tol = {})",
            cfg.tol
        );
    } else {
        println!(
            "no convergence after {iterations} iterations (tol = {})",
            cfg.tol
        );
    }
    Ok(EXIT_OK)
}

/// Five test functions for the weak-form check.
pub fn weak_form_test_functions() -> Vec<TestFunction> {
    vec![
        TestFunction::CfReal {
            lambda_x: Vec3::new(0.5, 0.0, 0.0),
            lambda_u: Vec3::new(0.5, 0.0, 0.0),
        },
        TestFunction::CfImag {
            lambda_x: Vec3::new(0.0, 0.4, 0.0),
            lambda_u: Vec3::new(0.8, 0.0, 0.0),
        },
        TestFunction::HermitePoly { index: [2, 0, 0] },
        TestFunction::HermitePoly { index: [1, 1, 0] },
        TestFunction::GaussianBump {
            center_x: Vec3::ZERO,
            width_x: 1.5,
            center_u: Vec3::new(1.0, 0.0, 0.0),
            width_u: 1.0,
        },
    ]
}

fn load_run(dir: &Path) -> Result<(RunConfig, Ensemble), Failure> {
    let cfg = config_from_manifest(&dir.join(MANIFEST))?;
    let paths = format::load(&dir.join(PATHS_FILE))?;
    Ok((cfg, paths))
}

pub fn cmd_diagnose(a: &DiagnoseArgs) -> Result<i32, Failure> {
    let (cfg, run) = load_run(&a.run)?;
    let thresholds = Thresholds {
        z: a.z,
        ..Thresholds::default()
    };
    let checks = a.checks.clone().unwrap_or_else(|| {
        let mut c = vec![
            "maxwellian".to_string(),
            "tanaka".into(),
            "weak_form".into(),
        ];
        if a.against.is_some() {
            c.push("uniqueness".into());
        }
        c
    });
    let grid = default_lambda_grid();
    let seed = rng::derive(cfg.sim.master_seed, tag::DIAGNOSTICS);
    let mut reports: Vec<DiagnosticsReport> = Vec::new();
    for check in &checks {
        match check.as_str() {
            "maxwellian" => reports.extend(maxwellian_invariance_check(
                &run,
                &cfg.sim.output_times,
                &grid,
                &thresholds,
            )?),
            "tanaka" => {
                let mut g = vec![Vec3::ZERO];
                g.extend(&grid);
                reports.push(tanaka_symmetry_check(
                    &cfg.sim.kernels.speed,
                    &cfg.sim.kernels.angular,
                    a.samples,
                    seed,
                    &g,
                    cfg.sim.collision_rule,
                    &thresholds,
                )?);
            }
            "weak_form" => {
                let t = 0.5 * cfg.sim.horizon;
                let dt = (0.025 * cfg.sim.horizon).min(0.05);
                for psi in weak_form_test_functions() {
                    let w = weak_form_residual(
                        &run,
                        &cfg.sim.kernels,
                        &psi,
                        t,
                        dt,
                        a.samples,
                        seed,
                        &thresholds,
                    )?;
                    // observed order within 2 ± 0.5
                    let order_gap = w.richardson_order.map_or(0.0, |p| p - 2.0);
                    reports.push(w.report);
                    reports.push(DiagnosticsReport::with_threshold(
                        format!("richardson/{}", psi.name()),
                        order_gap,
                        0.0,
                        0.5,
                        run.len(),
                    ));
                }
            }
            "uniqueness" => {
                let other = a.against.as_ref().ok_or_else(|| Failure {
                    code: EXIT_USAGE,
                    message: "uniqueness needs --against".into(),
                })?;
                let (_, run2) = load_run(other)?;
                reports.extend(marginal_uniqueness_check(
                    &run,
                    &run2,
                    &cfg.sim.output_times,
                    picard::DEFAULT_DICTIONARY_SIZE,
                    &thresholds,
                )?);
            }
            other => {
                return Err(Failure {
                    code: EXIT_USAGE,
                    message: format!("unknown check {other:?}"),
                });
            }
        }
    }
    let dir = a.out_dir.clone().unwrap_or_else(|| a.run.clone());
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join("diagnostics.json"),
        diagnostics::to_json(&reports) + "\n",
    )?;
    fs::write(
        dir.join("diagnostics.csv"),
        diagnostics::summary_csv(&reports),
    )?;
    let mut summary = String::new();
    for r in &reports {
        let _ = writeln!(
            summary,
            "{} {:<48} stat {:+.4e} threshold {:.4e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.statistic,
            r.threshold
        );
    }
    print!("{summary}");
    Ok(if diagnostics::all_passed(&reports) {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    })
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<i32, Failure> {
    let cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => config::parse_str("", Path::new("."))?,
    };
    let report = cfg.sim.validation_report();
    println!("{report}");
    if !report.passed() {
        return Ok(EXIT_VALIDATION);
    }
    match cfg.sim.validate() {
        Ok(()) => Ok(EXIT_OK),
        Err(e) => Err(e.into()),
    }
}
