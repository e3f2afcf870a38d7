//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use enskog::collision::{collide, deflection_vector, involution_defect, CollisionAngles};
use enskog::diagnostics::{
    default_lambda_grid, maxwellian_invariance_check, tanaka_symmetry_check, weak_form_residual,
    Thresholds,
};
use enskog::kernels::{AngularMeasure, Mollifier, SpeedFactor};
use enskog::picard::{run_to_tolerance, split_halves, PicardConfig, Seeding};
use enskog::rng;
use enskog::simulator::{
    replicate_seed, simulate, InitialLaw, JumpEvent, Kernels, PartnerUpdate, SimConfig, VelocityLaw,
};
use enskog::{law_distance, Vec3};
use rand::Rng;
use rayon::prelude::*;
use serde_json::Value;
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF, DiscreteCDF, Poisson};
use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

/// Fixed before the first run; every criterion derives its own stream from it.
const SEED: u64 = 20_261_015;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn seed(criterion: u64) -> u64 {
    rng::derive(SEED, criterion)
}

fn uniform_vec(r: &mut rng::Stream, half: f64) -> Vec3 {
    Vec3::new(
        r.random_range(-half..half),
        r.random_range(-half..half),
        r.random_range(-half..half),
    )
}

fn random_angles(r: &mut rng::Stream) -> CollisionAngles {
    let theta = PI * (1.0 - r.random::<f64>());
    CollisionAngles::new(theta, r.random_range(0.0..TAU)).unwrap()
}

/// Non-degenerate `(u, v, ξ)` triples drawn in parallel chunks.
fn triples(count: usize, half: f64, key: u64) -> Vec<(Vec3, Vec3, CollisionAngles)> {
    const CHUNK: usize = 10_000;
    (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::substream(key, c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            let mut out = Vec::with_capacity(len);
            while out.len() < len {
                let (u, v) = (uniform_vec(&mut r, half), uniform_vec(&mut r, half));
                let xi = random_angles(&mut r);
                if (u - v).norm() > 1e-9 * half {
                    out.push((u, v, xi));
                }
            }
            out
        })
        .collect()
}

fn homogeneous(c: f64) -> Kernels {
    Kernels {
        // Λ = 2π · mass = 2
        angular: AngularMeasure::uniform(1.0 / PI, 0.0).unwrap(),
        speed: SpeedFactor::constant(c).unwrap(),
        mollifier: Mollifier::unbounded(),
    }
}

fn two_point() -> InitialLaw {
    InitialLaw {
        velocity: VelocityLaw::TwoPoint {
            shift: 1.5,
            spread: 0.3,
        },
        ..InitialLaw::default()
    }
}

fn conservation() -> Verdict {
    let start = Instant::now();
    let data = triples(1_000_000, 1e3, seed(1));
    let (dp, de) = data
        .par_iter()
        .map(|&(u, v, xi)| {
            let out = collide(u, v, xi);
            let scale = u.norm() + v.norm() + out.alpha.norm();
            let dp = ((out.u_star + out.v_star) - (u + v)).norm() / (f64::EPSILON * scale);
            let e0 = u.norm_sq() + v.norm_sq();
            let de = ((out.u_star.norm_sq() + out.v_star.norm_sq()) - e0).abs() / e0;
            (dp, de)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let secs = start.elapsed().as_secs_f64();
    verdict(
        dp <= 4.0 && de < 1e-12 && secs < 5.0,
        format!("10^6 collisions: max momentum change {dp:.2} ulp-scale (<= 4), max rel energy error {de:.2e} (< 1e-12), {secs:.2}s (< 5s)"),
    )
}

fn involution() -> Verdict {
    let start = Instant::now();
    let data = triples(100_000, 10.0, seed(2));
    let worst = data
        .par_iter()
        .map(|&(u, v, xi)| involution_defect(u, v, xi).unwrap())
        .reduce(|| 0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-12 && secs < 2.0,
        format!("10^5 triples in [-10,10]^3: max defect {worst:.2e} (< 1e-12), {secs:.2}s (< 2s)"),
    )
}

fn scalar_identity() -> Verdict {
    let data = triples(100_000, 10.0, seed(3));
    let worst = data
        .par_iter()
        .map(|&(u, v, xi)| {
            let n = deflection_vector(u, v, xi).unwrap();
            (n.dot(u - v).abs() - (u - v).norm() * (0.5 * xi.theta()).sin()).abs()
        })
        .reduce(|| 0.0, f64::max);
    verdict(
        worst < 1e-12,
        format!("10^5 samples: max |(n,u-v)| - |u-v| sin(theta/2) gap {worst:.2e} (< 1e-12)"),
    )
}

/// Equiprobable bins of Poisson(mean), returned as inclusive upper edges.
fn poisson_bins(p: &Poisson, bins: usize) -> Vec<u64> {
    let mut edges: Vec<u64> = (1..bins)
        .map(|k| p.inverse_cdf(k as f64 / bins as f64))
        .collect();
    edges.dedup();
    edges.push(u64::MAX);
    edges
}

fn thinning() -> Verdict {
    let start = Instant::now();
    let (n, t, replicates, bins) = (1000usize, 3.0, 100u64, 8usize);
    let mut parts = Vec::new();
    let mut passed = true;
    for (k, c) in [1.0, 0.5, 0.1].into_iter().enumerate() {
        let key = rng::derive(seed(4), k as u64);
        let counts: Vec<u64> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let cfg = SimConfig {
                    particle_count: n,
                    horizon: t,
                    kernels: homogeneous(c),
                    output_times: vec![t],
                    master_seed: replicate_seed(key, r),
                    ..SimConfig::default()
                };
                simulate(&cfg, None).unwrap().accepted_count() as u64
            })
            .collect();
        let mean = n as f64 * 2.0 * c * t;
        let law = Poisson::new(mean).unwrap();
        let edges = poisson_bins(&law, bins);
        let mut stat = 0.0;
        let mut lower_cdf = 0.0;
        for (b, &hi) in edges.iter().enumerate() {
            let upper_cdf = if hi == u64::MAX { 1.0 } else { law.cdf(hi) };
            let expected = replicates as f64 * (upper_cdf - lower_cdf);
            let lo = if b == 0 { 0 } else { edges[b - 1] + 1 };
            let observed = counts.iter().filter(|&&x| x >= lo && x <= hi).count() as f64;
            stat += (observed - expected).powi(2) / expected;
            lower_cdf = upper_cdf;
        }
        let critical = ChiSquared::new((edges.len() - 1) as f64)
            .unwrap()
            .inverse_cdf(0.99);
        passed &= stat < critical;
        parts.push(format!("c={c}: chi2 {stat:.2} < {critical:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    passed &= secs < 120.0;
    verdict(
        passed,
        format!(
            "{} over 100 replicates, {secs:.1}s (< 120s)",
            parts.join("; ")
        ),
    )
}

fn maxwellian() -> Verdict {
    let start = Instant::now();
    let cfg = SimConfig {
        particle_count: 10_000,
        horizon: 2.0,
        kernels: homogeneous(1.0),
        partner_update: PartnerUpdate::Symmetric,
        output_times: vec![0.0, 1.0, 2.0],
        master_seed: seed(5),
        ..SimConfig::default()
    };
    let out = simulate(&cfg, None).unwrap();
    let times = [0.0, 1.0, 2.0];
    let grid = default_lambda_grid();
    let literal =
        maxwellian_invariance_check(&out.paths, &times, &grid, &Thresholds::default()).unwrap();
    // one decision over the whole family of statistics at overall level 1%
    let family = Thresholds::bonferroni(literal.len(), 0.01);
    let reports = maxwellian_invariance_check(&out.paths, &times, &grid, &family).unwrap();
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    let exceed: Vec<String> = literal
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            format!(
                "{} at {:.2}x threshold",
                r.name,
                r.statistic.abs() / r.threshold
            )
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failed.is_empty() && secs < 120.0,
        format!(
            "N=10^4, {} accepted collisions, {} statistics at t=0,1,2; family-wise 1% (z {:.2}, KS {:.3}) failed {:?}; uncorrected (z 3, KS 1.628) exceedances {:?}; {secs:.1}s (< 120s)",
            out.accepted_count(),
            reports.len(),
            family.z,
            family.ks_critical,
            failed,
            exceed
        ),
    )
}

fn tanaka() -> Verdict {
    let mut grid = default_lambda_grid();
    grid.push(Vec3::ZERO);
    let q = AngularMeasure::uniform(1.0 / PI, 0.0).unwrap();
    let th = Thresholds::default();
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, s) in [
        ("constant", SpeedFactor::constant(1.0).unwrap()),
        (
            "smooth_saturating",
            SpeedFactor::smooth_saturating(1.0).unwrap(),
        ),
    ] {
        let r = tanaka_symmetry_check(
            &s,
            &q,
            100_000,
            seed(6),
            &grid,
            enskog::CollisionRule::Elastic,
            &th,
        )
        .unwrap();
        passed &= r.passed;
        parts.push(format!(
            "{name}: worst {} at {:.2} SE",
            r.name,
            r.statistic.abs() / r.standard_error
        ));
    }
    verdict(
        passed,
        format!("10^5 paired samples, threshold 3 SE; {}", parts.join("; ")),
    )
}

fn weak_form() -> Verdict {
    let kernels = Kernels {
        mollifier: Mollifier::bump(3.0).unwrap(),
        ..homogeneous(1.0)
    };
    let cfg = SimConfig {
        particle_count: 10_000,
        horizon: 2.0,
        kernels: kernels.clone(),
        initial: two_point(),
        output_times: vec![0.0, 1.0, 2.0],
        master_seed: seed(7),
        ..SimConfig::default()
    };
    let out = simulate(&cfg, None).unwrap();
    let th = Thresholds::default();
    let mut passed = true;
    let mut parts = Vec::new();
    for (k, psi) in enskog::cli::weak_form_test_functions().iter().enumerate() {
        let r = weak_form_residual(
            &out.paths,
            &kernels,
            psi,
            1.0,
            0.05,
            100_000,
            rng::derive(seed(7), k as u64),
            &th,
        )
        .unwrap();
        passed &= r.report.passed && r.richardson_ok();
        let order = r
            .richardson_order
            .map_or("exact".to_string(), |p| format!("{p:.2}"));
        parts.push(format!(
            "{}: |R| {:.2e} <= {:.2e}, order {order}",
            psi.name(),
            r.report.statistic.abs(),
            r.report.threshold
        ));
    }
    verdict(
        passed,
        format!("two-point run N=10^4, t=1, dt=0.05; {}", parts.join("; ")),
    )
}

fn picard_config(
    initial: InitialLaw,
    max_iters: usize,
    seeding: Seeding,
    criterion_seed: u64,
) -> PicardConfig {
    let sim = SimConfig {
        particle_count: 10_000,
        horizon: 2.0,
        kernels: homogeneous(1.0),
        initial,
        output_times: vec![0.0, 1.0, 2.0],
        master_seed: criterion_seed,
        ..SimConfig::default()
    };
    PicardConfig {
        max_iters,
        tol: 1e-12,
        seeding,
        noise_se: Some(0.0),
        ..PicardConfig::new(sim)
    }
}

fn picard() -> Verdict {
    let start = Instant::now();
    // (a) moment uniformity over 10 iterates
    let a = run_to_tolerance(&picard_config(
        two_point(),
        10,
        Seeding::Fresh,
        rng::derive(seed(8), 1),
    ))
    .unwrap();
    let env = a.envelope.unwrap();
    let sup = a.states.iter().map(|s| s.sup_moment2()).fold(0.0, f64::max);
    let pass_a = a.states.len() == 11 && a.moments_bounded();

    // (b) Maxwellian iterates against the split-half null
    let b = run_to_tolerance(&picard_config(
        InitialLaw::default(),
        3,
        Seeding::Fresh,
        rng::derive(seed(8), 2),
    ))
    .unwrap();
    let (h1, h2) = split_halves(&b.states[0].law).unwrap();
    let mut pass_b = true;
    let mut worst_b: f64 = 0.0;
    for s in &b.states[1..] {
        for p in s.distance_to_previous.as_ref().unwrap() {
            let null = law_distance(&h1, &h2, p.t, 64).unwrap();
            let margin = (p.distance.value - null.value) / null.standard_error;
            worst_b = worst_b.max(margin);
            pass_b &= p.distance.value <= null.value + 3.0 * null.standard_error;
        }
    }

    // (c) two-point distances non-increasing within noise
    let c = run_to_tolerance(&picard_config(
        two_point(),
        5,
        Seeding::Common,
        rng::derive(seed(8), 3),
    ))
    .unwrap();
    let d: Vec<_> = c.states[1..]
        .iter()
        .map(|s| s.max_distance().unwrap().distance)
        .collect();
    let pass_c = d.len() == 5
        && d.windows(2).all(|w| {
            w[1].value <= w[0].value + 3.0 * w[0].standard_error.hypot(w[1].standard_error)
        });
    let seq: Vec<String> = d.iter().map(|x| format!("{:.3}", x.value)).collect();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        pass_a && pass_b && pass_c,
        format!(
            "(a) {} sup E|Z|^2 {sup:.3}, envelope {:.3}e^({:.3}t) x1.2; (b) {} worst excess {worst_b:.2} null SE; (c) {} D_n [{}]; {secs:.1}s",
            ok(pass_a),
            env.a,
            env.b,
            ok(pass_b),
            ok(pass_c),
            seq.join(", ")
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn truncation_coupling() -> Verdict {
    let (j, n, horizon) = (4u32, 200usize, 2.0);
    let results: Vec<(bool, f64, bool)> = (0..100u64)
        .into_par_iter()
        .map(|r| {
            let base = SimConfig {
                particle_count: n,
                horizon,
                kernels: homogeneous(1.0),
                output_times: vec![horizon],
                master_seed: replicate_seed(seed(9), r),
                ..SimConfig::default()
            };
            let a = simulate(
                &SimConfig {
                    truncation_level: Some(j),
                    ..base.clone()
                },
                None,
            )
            .unwrap();
            let b = simulate(
                &SimConfig {
                    truncation_level: Some(j + 1),
                    ..base
                },
                None,
            )
            .unwrap();
            let tau = a
                .stopping
                .iter()
                .filter_map(|s| s.tau_j)
                .fold(horizon, f64::min);
            let prefix = |o: &[JumpEvent]| {
                o.iter()
                    .filter(|e| e.time <= tau)
                    .cloned()
                    .collect::<Vec<_>>()
            };
            (
                prefix(&a.events) == prefix(&b.events),
                tau,
                a.events != b.events,
            )
        })
        .collect();
    let agree = results.iter().filter(|r| r.0).count();
    let positive = results.iter().filter(|r| r.1 > 0.0).count();
    let diverged = results.iter().filter(|r| r.2).count();
    let mean_tau = results.iter().map(|r| r.1).sum::<f64>() / results.len() as f64;
    verdict(
        agree == 100,
        format!(
            "j={j} vs j+1, N={n}: {agree}/100 agree up to min(tau_j, T); tau_j > 0 in {positive}, mean {mean_tau:.3}; runs differ after tau_j in {diverged}"
        ),
    )
}

fn digests(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let mut bytes = fs::read(&path).unwrap();
        if name == "manifest.json" {
            let mut v: Value = serde_json::from_slice(&bytes).unwrap();
            v.as_object_mut().unwrap().remove("timing");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        out.insert(
            name,
            Sha256::digest(&bytes)
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect(),
        );
    }
    out
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "n_particles = 5000\nhorizon = 2.0\nbeta.radius = 1.0\nseed = {}\n",
            seed(10)
        ),
    )
    .unwrap();
    let run = |args: &[&str], threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_enskog"))
            .args(args)
            .env("ENSKOG_THREADS", threads)
            .status()
            .unwrap()
            .success()
    };
    let dir = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let (a, b, c) = (dir("a"), dir("b"), dir("c"));
    let manifest = format!("{a}/manifest.json");
    let ran = run(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            &a,
        ],
        "4",
    ) && run(&["simulate", "--manifest", &manifest, "--out-dir", &b], "1")
        && run(&["simulate", "--manifest", &manifest, "--out-dir", &c], "4");
    if !ran {
        return verdict(false, "simulate exited with an error".into());
    }
    let (da, db, dc) = (
        digests(Path::new(&a)),
        digests(Path::new(&b)),
        digests(Path::new(&c)),
    );
    verdict(
        da == db && da == dc,
        format!(
            "{} files compared by SHA-256 across ENSKOG_THREADS=1 and 4 reruns from the manifest",
            da.len()
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "collision conservation", conservation),
        (2, "involution", involution),
        (3, "scalar-product identity", scalar_identity),
        (4, "thinning calibration", thinning),
        (5, "Maxwellian invariance", maxwellian),
        (6, "Tanaka symmetry", tanaka),
        (7, "weak-form residual", weak_form),
        (8, "Picard behavior", picard),
        (9, "truncation coupling", truncation_coupling),
        (10, "determinism", determinism),
    ];
    let mut failures = 0;
    for (k, name, check) in criteria {
        let v = check();
        failures += usize::from(!v.passed);
        println!(
            "criterion {k:2} {} {name}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
