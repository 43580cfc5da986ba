//! End-to-end tests of the `qcrv` binary: full command runs against real
//! configurations in temporary directories, including resume, export, the
//! invariant suites, and the single-writer lock.

use std::path::Path;
use std::process::{Command, Output};

use qcrv::constraints::normalize_volume;
use qcrv::{ScalarField, TorusGrid};
use qcrv_cli::lock::RunLock;
use qcrv_cli::snapshot::{read_snapshot, write_snapshot, Snapshot};
use qcrv_cli::tracecsv::{read_trace_csv, write_trace_csv};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qcrv"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SWEEP_CFG: &str = "\
dimension = 2
grid = 32
profile.l = 2
profile.center = 0.0 0.0
schedule.lambda_hi = 0.3
schedule.lambda_lo = 0.1
schedule.steps = 3
solver.el_residual_tol = 1e-6
bubble.enabled = false
";

#[test]
fn sweep_resume_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out_str = out_dir.display().to_string();
    let cfg = write_config(dir.path(), SWEEP_CFG);

    // fresh sweep
    let sweep = run(&["sweep", "--config", &cfg, "--out", &out_str]);
    assert!(sweep.status.success(), "stderr: {}", stderr(&sweep));
    let trace_path = out_dir.join("trace.csv");
    let first = read_trace_csv(&trace_path).unwrap();
    assert_eq!(first.len(), 3);
    assert!(first.iter().all(|r| r.converged), "{first:?}");
    for idx in 0..3 {
        assert!(out_dir.join(format!("snapshot_{idx:03}.qcrv")).exists());
    }
    let analysis: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("analysis.json")).unwrap())
            .unwrap();
    assert_eq!(analysis["monotone"]["pass"], serde_json::Value::Bool(true), "{analysis}");
    assert!(out_dir.join("run.log").exists());

    // resumed sweep reuses every snapshot and reproduces the metrics
    let resumed = run(&["sweep", "--config", &cfg, "--out", &out_str, "--resume"]);
    assert!(resumed.status.success(), "stderr: {}", stderr(&resumed));
    assert!(stdout(&resumed).contains("[resumed]"), "{}", stdout(&resumed));
    let second = read_trace_csv(&trace_path).unwrap();
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        assert!((a.beta - b.beta).abs() <= 1e-10 * a.beta.abs());
        assert!((a.alpha - b.alpha).abs() <= 1e-10 * a.alpha.abs());
        assert!(b.converged);
    }

    // export emits the plot files
    let export = run(&["export", "--config", &cfg, "--out", &out_str]);
    assert!(export.status.success(), "stderr: {}", stderr(&export));
    let beta_csv = std::fs::read_to_string(out_dir.join("export_beta.csv")).unwrap();
    assert_eq!(beta_csv.lines().count(), 4); // header + 3 converged rows
    assert!(beta_csv.starts_with("lambda,log_inv_lambda,beta,beta_over_loginvlambda"));
    let la_csv = std::fs::read_to_string(out_dir.join("export_lambda_alpha.csv")).unwrap();
    assert_eq!(la_csv.lines().count(), 4);
}

#[test]
fn solve_writes_metrics_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out_str = out_dir.display().to_string();
    let cfg = write_config(
        dir.path(),
        "dimension = 2\ngrid = 32\nprofile.l = 2\nprofile.center = 0.0 0.0\nsolve.lambda = 0.2\n",
    );

    let solve = run(&["solve", "--config", &cfg, "--out", &out_str]);
    assert!(solve.status.success(), "stderr: {}", stderr(&solve));
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("solve_metrics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(metrics["converged"], serde_json::Value::Bool(true), "{metrics}");
    assert_eq!(metrics["constraint_pass"], serde_json::Value::Bool(true), "{metrics}");
    assert!(metrics["el_residual"].as_f64().unwrap() <= 1e-6);
    assert!(metrics["beta"].as_f64().unwrap() > 0.0);
    assert!(metrics["alpha"].as_f64().unwrap() > 0.0);
    let beta_first = metrics["beta"].as_f64().unwrap();

    let snap = read_snapshot(&out_dir.join("solve_snapshot.qcrv")).unwrap();
    assert_eq!((snap.dimension, snap.grid), (2, 32));
    assert_eq!(snap.values.len(), 32 * 32);

    // resume skips the minimization and recomputes identical metrics
    let resumed = run(&["solve", "--config", &cfg, "--out", &out_str, "--resume"]);
    assert!(resumed.status.success(), "stderr: {}", stderr(&resumed));
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("solve_metrics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(metrics["resumed"], serde_json::Value::Bool(true), "{metrics}");
    let beta_second = metrics["beta"].as_f64().unwrap();
    assert!((beta_first - beta_second).abs() <= 1e-10 * beta_first.abs());
}

#[test]
fn bubble_fit_and_overlay_export() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    std::fs::create_dir_all(&out_dir).unwrap();
    let out_str = out_dir.display().to_string();
    let cfg = write_config(
        dir.path(),
        "dimension = 2\ngrid = 64\nbubble.window = 6\nbubble.m = 32\n",
    );

    // a concentrated field: the standard bubble of width 0.05 transplanted
    // onto the torus and volume-normalized
    let grid = TorusGrid::new(2, 64).unwrap();
    let sigma = 0.05;
    let raw = ScalarField::from_fn(grid, |x| {
        let d2 = grid.periodic_dist2(&x[..2], &[0.5, 0.5]);
        (2.0 * sigma / (sigma * sigma + d2)).ln()
    })
    .unwrap();
    let u = normalize_volume(&raw).unwrap();
    write_snapshot(
        &out_dir.join("snapshot_000.qcrv"),
        &Snapshot { dimension: 2, grid: 64, lambda: 0.01, values: u.values().to_vec() },
    )
    .unwrap();

    let bubble = run(&["bubble", "--config", &cfg, "--out", &out_str]);
    assert!(bubble.status.success(), "stderr: {}", stderr(&bubble));
    let record: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("bubble_fit.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(record["fit"]["converged"], serde_json::Value::Bool(true), "{record}");
    assert!(record["fit"]["linf_residual"].as_f64().unwrap() <= 0.05, "{record}");
    // the rescaled profile should fit s = sigma / r_sel; with ball mass 1/8
    // the selected radius of this density is near sigma / sqrt(7)
    let r_sel = record["r_sel"].as_f64().unwrap();
    assert!((r_sel - sigma / 7f64.sqrt()).abs() <= 1.0 / 64.0, "{record}");
    let s = record["fit"]["s"].as_f64().unwrap();
    assert!((s - sigma / r_sel).abs() <= 0.05 * (sigma / r_sel), "{record}");

    let rescaled = read_snapshot(&out_dir.join("rescaled_profile.qcrv")).unwrap();
    assert_eq!((rescaled.dimension, rescaled.grid), (2, 32));
    assert_eq!(rescaled.values.len(), 32 * 32);

    // export needs a trace; provide a small synthetic one, then check the
    // bubble overlay columns
    let trace = qcrv::continuation::ContinuationTrace {
        records: [0.04, 0.02, 0.01]
            .iter()
            .map(|&l| qcrv::continuation::TraceRecord {
                lambda: l,
                beta: (1.0 / l).ln(),
                alpha: 1.0 / l,
                lambda_alpha: 1.0,
                el_residual: 1e-9,
                iterations: 10,
                converged: true,
                constraint_pass: true,
                bubble: None,
            })
            .collect(),
    };
    write_trace_csv(&out_dir.join("trace.csv"), &trace, 2).unwrap();
    let export = run(&["export", "--config", &cfg, "--out", &out_str]);
    assert!(export.status.success(), "stderr: {}", stderr(&export));
    let overlay = std::fs::read_to_string(out_dir.join("export_bubble.csv")).unwrap();
    let lines: Vec<&str> = overlay.lines().collect();
    assert_eq!(lines[0], "z_abs,u_hat,fitted");
    assert_eq!(lines.len(), 1 + 32 * 32);
    // rows sorted by |z|, and the overlay tracks the data closely
    let mut prev = -1.0;
    for line in &lines[1..] {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells[0] >= prev);
        prev = cells[0];
        assert!((cells[1] - cells[2]).abs() <= 0.06, "{line}");
    }
}

#[test]
fn verify_reports_all_suites_green() {
    let out = run(&["verify"]);
    assert!(out.status.success(), "stdout: {}\nstderr: {}", stdout(&out), stderr(&out));
    let text = stdout(&out);
    assert!(text.contains(", 0 failed"), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("ok   ")).count() >= 14, "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn verify_validates_a_user_config() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "dimension = 2\ngrid = 16\n");
    let out = run(&["verify", "--config", &good]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("user config parses"), "{}", stdout(&out));

    let bad_path = dir.path().join("bad.cfg");
    std::fs::write(&bad_path, "dimension = 3\ngrid = 16\n").unwrap();
    let out = run(&["verify", "--config", &bad_path.display().to_string()]);
    assert!(!out.status.success());
    assert!(stdout(&out).contains("unsupported dimension"), "{}", stdout(&out));
}

#[test]
fn run_directory_lock_excludes_second_writer() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out_str = out_dir.display().to_string();
    let cfg = write_config(dir.path(), SWEEP_CFG);

    let _held = RunLock::acquire(&out_dir).unwrap();
    let out = run(&["sweep", "--config", &cfg, "--out", &out_str]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("another process"), "{}", stderr(&out));
}

#[test]
fn config_errors_fail_fast_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dimension = 3\ngrid = 16\n");
    let out = run(&["solve", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unsupported dimension"), "{}", stderr(&out));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
}

#[test]
fn thread_cap_env_is_validated() {
    let ok = bin().args(["verify"]).env("QCRV_THREADS", "2").output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    let bad = bin().args(["verify"]).env("QCRV_THREADS", "lots").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("QCRV_THREADS"));
}
