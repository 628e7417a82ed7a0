use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fringe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fringe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fringe(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path → file bytes for every file under `root` except the manifest.
fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().unwrap() != "manifest.json" {
                let rel = path.strip_prefix(root).unwrap().to_str().unwrap().to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("sim");
    let mut args = vec!["simulate", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn simulate_writes_three_frames_per_triple() {
    let tmp = TempDir::new().unwrap();
    let out = simulate(tmp.path(), &["--triples", "3"]);
    let files = tree(&out);
    let frames = files.keys().filter(|k| k.ends_with(".pfm") && k.contains("/I")).count();
    assert_eq!(frames, 9);
    for j in 0..3 {
        for name in ["frames.json", "gt_depth.pfm", "gt_phase.pfm", "gt_mask.pgm"] {
            assert!(files.contains_key(&format!("triple_{j:04}/{name}")), "{name}");
        }
    }
    assert!(files.contains_key("encoder.csv"));
    let encoder = String::from_utf8(files["encoder.csv"].clone()).unwrap();
    assert!(encoder.starts_with("time_s,displacement_mm\n"));

    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 0);
    let listed = manifest["outputs"].as_array().unwrap();
    assert_eq!(listed.len(), files.len());
    for entry in listed {
        let rel = entry["path"].as_str().unwrap();
        let bytes = &files[rel];
        let expected = entry["sha256"].as_str().unwrap();
        assert_eq!(expected.len(), 64);
        assert_eq!(expected, fringe_sha(bytes), "hash of {rel}");
    }

    let frames: Value = serde_json::from_slice(&files["triple_0001/frames.json"]).unwrap();
    let t: Vec<f64> = serde_json::from_value(frames["t"].clone()).unwrap();
    let d: Vec<f64> = serde_json::from_value(frames["d"].clone()).unwrap();
    assert!((t[0] - 3.0 / 120.0).abs() < 1e-12);
    assert!((d[1] - d[0] - 80.0 / 120.0).abs() < 1e-9);
}

/// SHA-256 through the coreutils tool, independent of the binary's hashing.
fn fringe_sha(bytes: &[u8]) -> String {
    let tmp = tempfile::NamedTempFile::new().unwrap();
    fs::write(tmp.path(), bytes).unwrap();
    let out = Command::new("sha256sum")
        .arg(tmp.path())
        .output()
        .expect("sha256sum available");
    String::from_utf8_lossy(&out.stdout)
        .split_whitespace()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn zero_length_trajectory_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let traj = tmp.path().join("traj.csv");
    fs::write(&traj, "time_s,displacement_mm\n0.0,0.0\n").unwrap();
    let out = fringe(&["simulate", "--out", s(&tmp.path().join("o")), "--trajectory", s(&traj)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("trajectory domain empty"), "{}", stderr(&out));
}

#[test]
fn parse_errors_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let scene = tmp.path().join("scene.json");
    fs::write(&scene, r#"{"objects": [{"type": "sphere", "center": [0, 0, 500]}]}"#).unwrap();
    let out = fringe(&["simulate", "--out", s(&tmp.path().join("o")), "--scene", s(&scene)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("objects[0].radius"), "{}", stderr(&out));

    let out = fringe(&["simulate", "--out", s(&tmp.path().join("o")), "--triples", "many"]);
    assert_eq!(code(&out), 2);
    let out = fringe(&["frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn io_failures_exit_3() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = fringe(&["patterns", "--out", s(&blocker.join("sub"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let out = fringe(&[
        "simulate",
        "--out",
        s(&tmp.path().join("o")),
        "--scene",
        s(&tmp.path().join("none.json")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn seeded_runs_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let noise = [
        "--image-noise",
        "0.01",
        "--encoder-noise",
        "0.002",
        "--encoder-quantization",
        "0.001",
        "--seed",
        "7",
    ];
    let mut trees = Vec::new();
    let mut clouds = Vec::new();
    for (k, threads) in ["1", "3", "1"].iter().enumerate() {
        let sim = tmp.path().join(format!("sim{k}"));
        let mut args = vec!["simulate", "--out", s(&sim), "--threads", threads];
        args.extend_from_slice(&noise);
        ok(&args);
        trees.push(tree(&sim));
        let rec = tmp.path().join(format!("rec{k}"));
        ok(&[
            "reconstruct",
            "--frames",
            s(&sim.join("triple_0000")),
            "--out",
            s(&rec),
            "--threads",
            threads,
        ]);
        clouds.push(tree(&rec));
    }
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[0], trees[2]);
    assert_eq!(clouds[0], clouds[1]);
    assert_eq!(clouds[0], clouds[2]);

    let other = tmp.path().join("other");
    ok(&["simulate", "--out", s(&other), "--image-noise", "0.01", "--seed", "8"]);
    assert_ne!(tree(&other)["triple_0000/I1.pfm"], trees[0]["triple_0000/I1.pfm"]);
}

#[test]
fn missing_frame_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), &[]);
    let triple = sim.join("triple_0000");
    fs::remove_file(triple.join("I3.pfm")).unwrap();
    let out = fringe(&["reconstruct", "--frames", s(&triple), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("I3.pfm"), "{}", stderr(&out));
}

#[test]
fn debug_maps_are_written() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), &[]);
    let rec = tmp.path().join("r");
    ok(&[
        "reconstruct",
        "--frames",
        s(&sim.join("triple_0000")),
        "--calibration",
        s(&sim.join("calibration.json")),
        "--out",
        s(&rec),
        "--debug-maps",
    ]);
    for name in [
        "wrapped_phase.pfm",
        "min_phase.pfm",
        "fringe_order.pfm",
        "absolute_phase.pfm",
        "modulation.pfm",
        "mask.pgm",
    ] {
        assert!(rec.join("debug").join(name).is_file(), "{name}");
    }
    let diag = fs::read_to_string(rec.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("round,rmse_mm,discarded_px\n0,"));
    assert_eq!(diag.lines().count(), 4);
}

#[test]
fn static_capture_gives_identical_clouds_for_all_modes() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), &["--speed", "0"]);
    let frames = sim.join("triple_0000");
    let mut clouds = Vec::new();
    for mode in ["conventional", "general", "uniform"] {
        let rec = tmp.path().join(mode);
        ok(&["reconstruct", "--frames", s(&frames), "--out", s(&rec), "--mode", mode]);
        clouds.push(fs::read(rec.join("cloud.ply")).unwrap());
    }
    assert!(clouds[0].len() > 1000);
    assert_eq!(clouds[0], clouds[1]);
    assert_eq!(clouds[0], clouds[2]);
}

#[test]
fn config_file_and_flags() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), &[]);
    let frames = sim.join("triple_0000");
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"iterations": 1, "mode": "uniform"}"#).unwrap();
    let rec = tmp.path().join("r");
    ok(&[
        "reconstruct",
        "--frames",
        s(&frames),
        "--out",
        s(&rec),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(
        fs::read_to_string(rec.join("diagnostics.csv")).unwrap().lines().count(),
        3
    );
    let manifest: Value = serde_json::from_slice(&fs::read(rec.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["pipeline"]["mode"], "uniform");

    ok(&[
        "reconstruct",
        "--frames",
        s(&frames),
        "--out",
        s(&rec),
        "--config",
        s(&cfg),
        "--iterations",
        "3",
    ]);
    assert_eq!(
        fs::read_to_string(rec.join("diagnostics.csv")).unwrap().lines().count(),
        5
    );

    fs::write(&cfg, r#"{"iteratons": 1}"#).unwrap();
    let out = fringe(&[
        "reconstruct",
        "--frames",
        s(&frames),
        "--out",
        s(&rec),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("iteratons"), "{}", stderr(&out));

    let out = fringe(&[
        "reconstruct",
        "--frames",
        s(&frames),
        "--out",
        s(&rec),
        "--direction",
        "1,1,0",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn encoder_log_overrides_frame_readings() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), &[]);
    let frames = sim.join("triple_0000");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["reconstruct", "--frames", s(&frames), "--out", s(&a)]);
    ok(&[
        "reconstruct",
        "--frames",
        s(&frames),
        "--out",
        s(&b),
        "--encoder",
        s(&sim.join("encoder.csv")),
    ]);
    assert_eq!(
        fs::read(a.join("cloud.ply")).unwrap(),
        fs::read(b.join("cloud.ply")).unwrap()
    );
}

fn sphere_ply(path: &Path, offset: f64) {
    let mut text = String::from(
        "ply\nformat ascii 1.0\ncomment camera_resolution 40 20\nelement vertex 400\n\
         property float x\nproperty float y\nproperty float z\nproperty int u\nproperty int v\nend_header\n",
    );
    for i in 0..20 {
        for j in 0..20 {
            let theta = 0.2 + 1.2 * i as f64 / 19.0;
            let phi = std::f64::consts::TAU * j as f64 / 20.0;
            let r = 50.0 + if (i + j) % 2 == 0 { offset } else { -offset };
            let (x, y, z) = (
                r * theta.sin() * phi.cos(),
                r * theta.sin() * phi.sin(),
                500.0 - r * theta.cos(),
            );
            text.push_str(&format!("{x:.9} {y:.9} {z:.9} {} {}\n", j * 2, i));
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn evaluate_reports_and_compares() {
    let tmp = TempDir::new().unwrap();
    let perfect = tmp.path().join("perfect.ply");
    sphere_ply(&perfect, 0.0);
    let base = tmp.path().join("base");
    ok(&[
        "evaluate",
        "--cloud",
        s(&perfect),
        "--sphere",
        "0,0,500,50",
        "--out",
        s(&base),
    ]);
    let report: Value = serde_json::from_slice(&fs::read(base.join("report.json")).unwrap()).unwrap();
    assert!(report["rmse"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["count"], 400);
    for name in ["report.csv", "error_map.pfm", "error_map.ppm", "manifest.json"] {
        assert!(base.join(name).is_file(), "{name}");
    }
    let csv = fs::read_to_string(base.join("report.csv")).unwrap();
    assert!(csv.contains("mean,std,rmse,count,excluded"));

    let rough = tmp.path().join("rough.ply");
    sphere_ply(&rough, 0.1);
    let cmp = tmp.path().join("cmp");
    let out = ok(&[
        "evaluate",
        "--cloud",
        s(&rough),
        "--sphere",
        "0,0,500,50",
        "--baseline",
        s(&base.join("report.json")),
        "--out",
        s(&cmp),
    ]);
    let report: Value = serde_json::from_slice(&fs::read(cmp.join("report.json")).unwrap()).unwrap();
    assert!((report["rmse"].as_f64().unwrap() - 0.1).abs() < 1e-6);
    assert!(report["comparison"]["rmse_change_pct"].as_f64().unwrap() > 0.0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("vs baseline"));

    // Large errors still succeed.
    let far = tmp.path().join("far");
    ok(&[
        "evaluate",
        "--cloud",
        s(&rough),
        "--sphere",
        "0,0,900,10",
        "--out",
        s(&far),
    ]);

    let fit = tmp.path().join("fit");
    ok(&["evaluate", "--cloud", s(&perfect), "--fit", "--out", s(&fit)]);
    let report: Value = serde_json::from_slice(&fs::read(fit.join("report.json")).unwrap()).unwrap();
    assert!((report["sphere"]["radius"].as_f64().unwrap() - 50.0).abs() < 1e-6);
}

#[test]
fn evaluate_rejects_bad_ply() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.ply");
    fs::write(&bad, "ply\nformat binary_little_endian 1.0\nend_header\n").unwrap();
    let out = fringe(&[
        "evaluate",
        "--cloud",
        s(&bad),
        "--sphere",
        "0,0,500,50",
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&out), 2);
    let out = fringe(&["evaluate", "--cloud", s(&bad), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2, "a reference is required");
}

#[test]
fn patterns_are_written() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("p");
    ok(&[
        "patterns",
        "--out",
        s(&out),
        "--pitch",
        "24",
        "--width",
        "48",
        "--height",
        "4",
    ]);
    for step in 1..=3 {
        let pfm = fs::read(out.join(format!("pattern_{step}.pfm"))).unwrap();
        assert!(pfm.starts_with(b"Pf\n48 4\n"));
        let pgm = fs::read(out.join(format!("pattern_{step}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n48 4\n255\n"));
    }
}
