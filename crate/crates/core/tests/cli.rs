use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_enskog");

fn enskog(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("ENSKOG_THREADS", t),
        None => cmd.env_remove("ENSKOG_THREADS"),
    };
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str =
    "n_particles = 500\nhorizon = 1.0\nbeta.radius = 1.0\nseed = 17\noutput_times = 0, 0.5, 1.0\n";

/// SHA-256 of every output file; the manifest is hashed with its timing key removed.
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

#[test]
fn collide_prints_post_collision_velocities() {
    let o = enskog(
        &[
            "collide",
            "--u",
            "1,0,0",
            "--v",
            "-1,0,0",
            "--theta",
            "3.141592653589793",
            "--phi",
            "0",
        ],
        None,
    );
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let u_star: Vec<f64> = serde_json::from_value(v["u_star"].clone()).unwrap();
    let v_star: Vec<f64> = serde_json::from_value(v["v_star"].clone()).unwrap();
    // head-on reversal: the velocities are exchanged
    assert!((u_star[0] + 1.0).abs() < 1e-12 && u_star[1].abs() < 1e-12 && u_star[2].abs() < 1e-12);
    assert!((v_star[0] - 1.0).abs() < 1e-12);
    assert!(v["energy_residual"].as_f64().unwrap().abs() < 1e-14);

    let o = enskog(
        &[
            "collide", "--u", "1,2,3", "--v", "1,2,3", "--theta", "1", "--phi", "2",
        ],
        None,
    );
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["alpha"], serde_json::json!([0.0, 0.0, 0.0]));
}

#[test]
fn usage_errors_exit_with_code_two() {
    assert_eq!(
        code(&enskog(
            &["collide", "--u", "1,0,0", "--v", "0,0,0", "--phi", "0"],
            None
        )),
        2
    );
    assert_eq!(
        code(&enskog(
            &["collide", "--u", "1,0", "--v", "0,0,0", "--theta", "1", "--phi", "0"],
            None
        )),
        2
    );
    assert_eq!(
        code(&enskog(
            &["collide", "--u", "1,0,0", "--v", "0,0,0", "--theta", "4", "--phi", "0"],
            None
        )),
        2
    );
    assert_eq!(code(&enskog(&["frobnicate"], None)), 2);
    assert_eq!(code(&enskog(&["validate"], Some("zero"))), 2);
}

#[test]
fn validation_failures_exit_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let non_cutoff = write_config(tmp.path(), "q.family = maxwellian_power\nq.theta_min = 0\n");
    assert_eq!(
        code(&enskog(&["validate", "--config", &non_cutoff], None)),
        1
    );
    let late = write_config(tmp.path(), "horizon = 1.0\noutput_times = 0, 2.0\n");
    let out = tmp.path().join("out");
    assert_eq!(
        code(&enskog(
            &[
                "simulate",
                "--config",
                &late,
                "--out-dir",
                out.to_str().unwrap()
            ],
            None
        )),
        1
    );
    assert!(!out.exists());
    let unknown = write_config(tmp.path(), "n_partikles = 10\n");
    assert_eq!(code(&enskog(&["validate", "--config", &unknown], None)), 1);
    assert_eq!(code(&enskog(&["validate"], None)), 0);
}

#[test]
fn simulate_writes_outputs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("a");
    let o = enskog(
        &[
            "simulate",
            "--config",
            &cfg,
            "--out-dir",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "paths.ensk",
        "events.csv",
        "manifest.json",
        "snapshot_000.ensk",
        "snapshot_001.ensk",
        "snapshot_002.ensk",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seeds"]["master"], 17);
    assert_eq!(m["config"]["n_particles"], "500");
    let events = fs::read_to_string(out.join("events.csv")).unwrap();
    assert_eq!(
        events.lines().next().unwrap(),
        "time,particle,accepted,dv_norm"
    );
    assert_eq!(
        events.lines().count() as u64 - 1,
        m["event_counts"]["candidates"].as_u64().unwrap()
    );
    let paths = enskog::format::load(&out.join("paths.ensk")).unwrap();
    assert_eq!(paths.len(), 500);
}

#[test]
fn manifest_rerun_is_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert_eq!(
        code(&enskog(
            &[
                "simulate",
                "--config",
                &cfg,
                "--out-dir",
                a.to_str().unwrap()
            ],
            Some("1")
        )),
        0
    );
    let manifest = a.join("manifest.json");
    let m = manifest.to_str().unwrap();
    assert_eq!(
        code(&enskog(
            &[
                "simulate",
                "--manifest",
                m,
                "--out-dir",
                b.to_str().unwrap()
            ],
            Some("4")
        )),
        0
    );
    assert_eq!(
        code(&enskog(
            &[
                "simulate",
                "--manifest",
                m,
                "--out-dir",
                c.to_str().unwrap()
            ],
            Some("1")
        )),
        0
    );
    let (da, db, dc) = (digests(&a), digests(&b), digests(&c));
    assert_eq!(da.len(), 6);
    assert_eq!(da, db);
    assert_eq!(da, dc);
}

#[test]
fn picard_refuses_tolerance_below_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("p");
    let o = enskog(
        &[
            "picard",
            "--config",
            &cfg,
            "--tol",
            "1e-6",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise"));

    let o = enskog(
        &[
            "picard",
            "--config",
            &cfg,
            "--tol",
            "10",
            "--max-iters",
            "2",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("picard.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "n,t,moment2,se,distance,distance_se"
    );
    assert!(out.join("manifest.json").exists());
}

#[test]
fn diagnose_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n_particles = 2000\nhorizon = 1.0\nbeta.radius = inf\npartner_update = symmetric\nseed = 3\n");
    let run = tmp.path().join("run");
    assert_eq!(
        code(&enskog(
            &[
                "simulate",
                "--config",
                &cfg,
                "--out-dir",
                run.to_str().unwrap()
            ],
            None
        )),
        0
    );
    let out = tmp.path().join("diag");
    let o = enskog(
        &[
            "diagnose",
            "--run",
            run.to_str().unwrap(),
            "--checks",
            "maxwellian,tanaka",
            "--samples",
            "20000",
            "--out-dir",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(
        matches!(code(&o), 0 | 1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let reports: Value =
        serde_json::from_slice(&fs::read(out.join("diagnostics.json")).unwrap()).unwrap();
    let reports = reports.as_array().unwrap();
    assert!(reports
        .iter()
        .any(|r| r["name"].as_str().unwrap().starts_with("maxwellian/")));
    assert!(reports
        .iter()
        .any(|r| r["name"].as_str().unwrap().starts_with("tanaka")));
    let failed = reports.iter().filter(|r| r["passed"] == false).count();
    assert_eq!(code(&o), i32::from(failed > 0));
    assert!(out.join("diagnostics.csv").exists());
}
