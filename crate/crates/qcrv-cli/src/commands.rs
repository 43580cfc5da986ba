//! The five run commands. `solve` minimizes at one level and writes a
//! snapshot plus metrics; `sweep` marches the schedule downward with warm
//! starts and writes trace.csv, per-level snapshots, and an analysis record;
//! `bubble` rescales the most concentrated snapshot and fits the standard
//! bubble; `verify` runs every built-in invariant suite; `export` turns a
//! finished run directory into plot-ready CSV files.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use qcrv::analytic::{make_test_function, standard_bubble, Profile};
use qcrv::bubble::{
    fit_standard_bubble, flatness_diagnostics, rescale, select_radius, BubbleFit,
    ConcentrationSelection, RescaledProfile,
};
use qcrv::constraints::check_constraints;
use qcrv::continuation::{
    check_derivative_identity, check_monotone, fit_log_slope, lambda_alpha_window,
    BubbleSummary, ContinuationTrace, TraceRecord, Verdict,
};
use qcrv::minimizer::{el_residual, extract_alpha, minimize};
use qcrv::selfcheck::CheckResult;
use qcrv::spectral::energy;
use qcrv::{ScalarField, TorusGrid};

use crate::config::{parse_config, RunConfig};
use crate::error::{CliError, Result};
use crate::lock::RunLock;
use crate::snapshot::{read_header, read_snapshot, write_snapshot, Snapshot};
use crate::tracecsv::{fmt_f64, read_trace_csv, write_trace_csv};

pub struct Ctx {
    pub config: RunConfig,
    pub out: PathBuf,
    pub defaults: Vec<String>,
}

pub fn load_ctx(config_path: &Path, out_flag: Option<PathBuf>) -> Result<Ctx> {
    let text =
        std::fs::read_to_string(config_path).map_err(|e| CliError::io(config_path, e))?;
    let parsed = parse_config(&text)?;
    let out = out_flag.unwrap_or_else(|| parsed.config.output_dir.clone());
    Ok(Ctx { config: parsed.config, out, defaults: parsed.applied_defaults })
}

/// Print a line and append it to the run log.
fn emit(out: &Path, line: &str) {
    println!("{line}");
    use std::io::Write;
    if let Ok(mut f) = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("run.log"))
    {
        let _ = writeln!(f, "{line}");
    }
}

fn announce(ctx: &Ctx, command: &str) {
    emit(
        &ctx.out,
        &format!(
            "qcrv {command}: dimension {}, grid {}, out {}",
            ctx.config.dimension,
            ctx.config.grid,
            ctx.out.display()
        ),
    );
    for d in &ctx.defaults {
        emit(&ctx.out, &format!("  default {d}"));
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::State(format!("{}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// The sweep's cold start: the concentrating test function at the profile's
/// primary maximum, scale max(1, lambda^(-1/2)).
fn cold_seed(profile: &Profile, lambda: f64) -> Result<ScalarField> {
    let grid = profile.f0.grid();
    let dim = grid.dim() as usize;
    let s = 1.0f64.max(1.0 / lambda.sqrt());
    Ok(make_test_function(grid, &profile.center[..dim], s, 0.1)?)
}

fn shape_check(path: &Path, dimension: u32, grid: u32, cfg: &RunConfig) -> Result<()> {
    if dimension != cfg.dimension || grid != cfg.grid {
        return Err(CliError::Snapshot {
            path: path.display().to_string(),
            message: format!(
                "holds a {dimension}-dimensional grid of {grid}, config wants {} / {}",
                cfg.dimension, cfg.grid
            ),
        });
    }
    Ok(())
}

fn bubble_diagnostics(
    u: &ScalarField,
    cfg: &RunConfig,
) -> qcrv::Result<(ConcentrationSelection, RescaledProfile, BubbleFit)> {
    let sel = select_radius(u, cfg.bubble_mass)?;
    let profile = rescale(u, &sel, cfg.bubble_window, cfg.bubble_m)?;
    let fit = fit_standard_bubble(&profile)?;
    Ok((sel, profile, fit))
}

fn summary_from(sel: &ConcentrationSelection, fit: &BubbleFit) -> BubbleSummary {
    BubbleSummary {
        r_sel: sel.radius,
        center: sel.center.clone(),
        s: fit.s,
        z0: fit.z0.clone(),
        fit_linf: fit.linf_residual,
    }
}

pub fn solve(ctx: &Ctx, resume: bool) -> Result<()> {
    let _lock = RunLock::acquire(&ctx.out)?;
    announce(ctx, "solve");
    let grid = ctx.config.build_grid()?;
    let profile = ctx.config.build_profile(grid)?;
    let lambda = ctx.config.solve_lambda * profile.lambda_max;
    let f = profile.f_lambda(lambda);
    let opts = ctx.config.solver_options();
    let snap_path = ctx.out.join("solve_snapshot.qcrv");

    let mut resumed = false;
    let (u, beta, alpha, residual, iterations, converged) = if resume && snap_path.exists() {
        let snap = read_snapshot(&snap_path)?;
        shape_check(&snap_path, snap.dimension, snap.grid, &ctx.config)?;
        if (snap.lambda - lambda).abs() > 1e-9 * lambda {
            return Err(CliError::Snapshot {
                path: snap_path.display().to_string(),
                message: format!(
                    "was written at lambda = {}, config asks for {lambda}",
                    snap.lambda
                ),
            });
        }
        let u = ScalarField::from_values(grid, snap.values)?;
        let beta = energy(&u)?;
        let alpha = extract_alpha(&u, &f)?;
        let residual = el_residual(&u, &f, alpha)?;
        resumed = true;
        let converged = residual <= opts.el_residual_tol;
        (u, beta, alpha, residual, 0usize, converged)
    } else {
        let seed = cold_seed(&profile, lambda)?;
        let res = minimize(&seed, &f, &opts)?;
        (res.u, res.beta, res.alpha, res.el_residual, res.iterations, res.converged)
    };
    let report = check_constraints(&u, &f)?;

    if !resumed {
        write_snapshot(
            &snap_path,
            &Snapshot {
                dimension: ctx.config.dimension,
                grid: ctx.config.grid,
                lambda,
                values: u.values().to_vec(),
            },
        )?;
    }
    let metrics = json!({
        "command": "solve",
        "dimension": ctx.config.dimension,
        "grid": ctx.config.grid,
        "lambda": lambda,
        "lambda_fraction": ctx.config.solve_lambda,
        "lambda_max": profile.lambda_max,
        "beta": beta,
        "alpha": alpha,
        "lambda_alpha": lambda * alpha,
        "el_residual": residual,
        "iterations": iterations,
        "converged": converged,
        "constraint_pass": report.pass(),
        "g1": report.g1,
        "g2": report.g2,
        "resumed": resumed,
    });
    write_json(&ctx.out.join("solve_metrics.json"), &metrics)?;
    emit(
        &ctx.out,
        &format!(
            "  lambda = {} beta = {} alpha = {} iterations = {iterations} converged = \
             {converged}{}",
            fmt_f64(lambda),
            fmt_f64(beta),
            fmt_f64(alpha),
            if resumed { " [resumed]" } else { "" }
        ),
    );
    if !converged {
        emit(&ctx.out, "  warning: solver did not reach the residual tolerance");
    }
    Ok(())
}

pub fn sweep(ctx: &Ctx, resume: bool) -> Result<()> {
    let _lock = RunLock::acquire(&ctx.out)?;
    announce(ctx, "sweep");
    let grid = ctx.config.build_grid()?;
    let profile = ctx.config.build_profile(grid)?;
    let schedule = ctx.config.schedule(profile.lambda_max)?;
    let opts = ctx.config.solver_options();
    let steps = schedule.values().len();

    let mut warm: Option<ScalarField> = None;
    let mut records = Vec::with_capacity(steps);
    for (idx, &lambda) in schedule.values().iter().enumerate() {
        let f = profile.f_lambda(lambda);
        let snap_path = ctx.out.join(format!("snapshot_{idx:03}.qcrv"));
        let mut resumed = false;
        let (u, beta, alpha, residual, iterations, converged) =
            if resume && snap_path.exists() {
                let (sd, sg, sl) = read_header(&snap_path)?;
                shape_check(&snap_path, sd, sg, &ctx.config)?;
                if (sl - lambda).abs() > 1e-9 * lambda {
                    return Err(CliError::Snapshot {
                        path: snap_path.display().to_string(),
                        message: format!(
                            "was written at lambda = {sl}, this schedule's step {idx} is \
                             {lambda} (did the schedule change?)"
                        ),
                    });
                }
                let snap = read_snapshot(&snap_path)?;
                let u = ScalarField::from_values(grid, snap.values)?;
                let beta = energy(&u)?;
                let alpha = extract_alpha(&u, &f)?;
                let residual = el_residual(&u, &f, alpha)?;
                resumed = true;
                let converged = residual <= opts.el_residual_tol;
                (u, beta, alpha, residual, 0usize, converged)
            } else {
                let seed = match &warm {
                    Some(w) => w.clone(),
                    None => cold_seed(&profile, lambda)?,
                };
                let res = minimize(&seed, &f, &opts)?;
                (res.u, res.beta, res.alpha, res.el_residual, res.iterations, res.converged)
            };
        let constraint_pass = check_constraints(&u, &f)?.pass();
        let mut record = TraceRecord {
            lambda,
            beta,
            alpha,
            lambda_alpha: lambda * alpha,
            el_residual: residual,
            iterations,
            converged,
            constraint_pass,
            bubble: None,
        };
        if ctx.config.bubble_enabled && converged {
            match bubble_diagnostics(&u, &ctx.config) {
                Ok((sel, _, fit)) => record.bubble = Some(summary_from(&sel, &fit)),
                Err(e) => emit(
                    &ctx.out,
                    &format!("  bubble diagnostics skipped at lambda = {}: {e}", fmt_f64(lambda)),
                ),
            }
        }
        if converged && !resumed {
            write_snapshot(
                &snap_path,
                &Snapshot {
                    dimension: ctx.config.dimension,
                    grid: ctx.config.grid,
                    lambda,
                    values: u.values().to_vec(),
                },
            )?;
        }
        emit(
            &ctx.out,
            &format!(
                "  [{}/{steps}] lambda = {} beta = {} alpha = {} iterations = {iterations} \
                 converged = {converged}{}",
                idx + 1,
                fmt_f64(lambda),
                fmt_f64(beta),
                fmt_f64(alpha),
                if resumed { " [resumed]" } else { "" }
            ),
        );
        records.push(record);
        warm = Some(u);
    }

    let trace = ContinuationTrace { records };
    write_trace_csv(&ctx.out.join("trace.csv"), &trace, ctx.config.dimension)?;
    let analysis = build_analysis(&trace, &profile, ctx.config.dimension);
    write_json(&ctx.out.join("analysis.json"), &analysis)?;

    let monotone = check_monotone(&trace);
    let deriv = check_derivative_identity(&trace, ctx.config.dimension);
    emit(
        &ctx.out,
        &format!(
            "  energy monotone along the sweep: {} ({} pairs, {} violations)",
            if monotone.pass { "yes" } else { "NO" },
            monotone.checked_pairs,
            monotone.violations
        ),
    );
    emit(
        &ctx.out,
        &format!(
            "  derivative identity: {} ({} points, {} over 5%)",
            verdict_str(deriv.verdict),
            deriv.points.len(),
            deriv.violations
        ),
    );
    Ok(())
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn build_analysis(trace: &ContinuationTrace, profile: &Profile, dimension: u32) -> Value {
    let monotone = check_monotone(trace);
    let deriv = check_derivative_identity(trace, dimension);
    let slope = match fit_log_slope(trace, profile.lambda_max) {
        Ok(s) => json!({
            "available": true,
            "slope": s.slope,
            "intercept": s.intercept,
            "r_squared": s.r_squared,
            "pointwise_ratios": s.pointwise_ratios
                .iter()
                .map(|(l, r)| json!({"lambda": l, "beta_over_loginvlambda": r}))
                .collect::<Vec<_>>(),
        }),
        Err(e) => json!({"available": false, "reason": e.to_string()}),
    };
    let window = match lambda_alpha_window(trace, dimension, profile.lambda_max) {
        Ok(w) => json!({
            "available": true,
            "smallest_lambda": w.smallest_lambda,
            "lambda_alpha": w.lambda_alpha,
            "target": w.target,
            "window": [w.window.0, w.window.1],
            "tail": w.tail,
            "nondecreasing_tail": w.nondecreasing_tail,
            "pass": w.pass,
        }),
        Err(e) => json!({"available": false, "reason": e.to_string()}),
    };
    let flatness = match flatness_diagnostics(trace, profile) {
        Ok(f) => json!({
            "available": true,
            "pass": f.pass,
            "tail_nonincreasing": f.tail_nonincreasing,
            "max_radius_ratio": f.max_radius_ratio,
            "max_dist_ratio": f.max_dist_ratio,
            "points": f.points
                .iter()
                .map(|p| json!({
                    "lambda": p.lambda,
                    "radius_ratio": p.radius_ratio,
                    "dist_ratio": p.dist_ratio,
                }))
                .collect::<Vec<_>>(),
        }),
        Err(e) => json!({"available": false, "reason": e.to_string()}),
    };
    json!({
        "monotone": {
            "pass": monotone.pass,
            "checked_pairs": monotone.checked_pairs,
            "violations": monotone.violations,
            "worst_margin": monotone.worst_margin,
            "vacuous": monotone.vacuous,
        },
        "derivative_identity": {
            "verdict": verdict_str(deriv.verdict),
            "schedule_fine": deriv.schedule_fine,
            "min_ratio": deriv.min_ratio,
            "violations": deriv.violations,
            "points": deriv.points
                .iter()
                .map(|p| json!({
                    "lambda": p.lambda,
                    "central_difference": p.central_difference,
                    "predicted": p.predicted,
                    "relative_error": p.relative_error,
                }))
                .collect::<Vec<_>>(),
        },
        "log_slope": slope,
        "lambda_alpha": window,
        "flatness": flatness,
    })
}

pub fn bubble(ctx: &Ctx) -> Result<()> {
    let _lock = RunLock::acquire(&ctx.out)?;
    announce(ctx, "bubble");

    // most concentrated field available: the snapshot with the smallest level
    let mut best: Option<(f64, PathBuf)> = None;
    let entries = std::fs::read_dir(&ctx.out).map_err(|e| CliError::io(&ctx.out, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(&ctx.out, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let is_field_snapshot = name.ends_with(".qcrv")
            && (name.starts_with("snapshot_") || name == "solve_snapshot.qcrv");
        if !is_field_snapshot {
            continue;
        }
        let path = entry.path();
        let (d, g, lambda) = read_header(&path)?;
        if d != ctx.config.dimension || g != ctx.config.grid {
            emit(
                &ctx.out,
                &format!("  skipping {name}: {d}-dimensional grid of {g} does not match config"),
            );
            continue;
        }
        if best.as_ref().is_none_or(|(l, _)| lambda < *l) {
            best = Some((lambda, path));
        }
    }
    let (lambda, path) = best.ok_or_else(|| {
        CliError::State(format!(
            "{}: no matching snapshots; run `solve` or `sweep` first",
            ctx.out.display()
        ))
    })?;
    emit(
        &ctx.out,
        &format!("  rescaling {} (lambda = {})", path.display(), fmt_f64(lambda)),
    );

    let snap = read_snapshot(&path)?;
    let grid = TorusGrid::new(snap.dimension, snap.grid)?;
    let u = ScalarField::from_values(grid, snap.values)?;
    let (sel, profile, fit) = bubble_diagnostics(&u, &ctx.config)?;

    write_snapshot(
        &ctx.out.join("rescaled_profile.qcrv"),
        &Snapshot {
            dimension: ctx.config.dimension,
            grid: ctx.config.bubble_m as u32,
            lambda,
            values: profile.values().to_vec(),
        },
    )?;
    let record = json!({
        "command": "bubble",
        "source": path.display().to_string(),
        "lambda": lambda,
        "r_sel": sel.radius,
        "center": sel.center,
        "achieved_mass": sel.achieved_mass,
        "recenter_rounds": sel.rounds,
        "cluster_warning": sel.cluster_warning,
        "window": profile.window(),
        "m": profile.points_per_axis(),
        "density_mismatch": profile.density_mismatch(),
        "fit": {
            "s": fit.s,
            "z0": fit.z0,
            "linf_residual": fit.linf_residual,
            "rms_residual": fit.rms_residual,
            "r_fit": fit.r_fit,
            "iterations": fit.iterations,
            "converged": fit.converged,
        },
    });
    write_json(&ctx.out.join("bubble_fit.json"), &record)?;
    emit(
        &ctx.out,
        &format!(
            "  r_sel = {} s = {} linf_residual = {} converged = {}",
            fmt_f64(sel.radius),
            fmt_f64(fit.s),
            fmt_f64(fit.linf_residual),
            fit.converged
        ),
    );
    if sel.cluster_warning {
        emit(&ctx.out, "  warning: a second mass cluster sits beyond 4 r_sel");
    }
    Ok(())
}

pub fn export(ctx: &Ctx) -> Result<()> {
    let _lock = RunLock::acquire(&ctx.out)?;
    announce(ctx, "export");
    let trace_path = ctx.out.join("trace.csv");
    if !trace_path.exists() {
        return Err(CliError::State(format!(
            "{}: no trace.csv; run `sweep` first",
            ctx.out.display()
        )));
    }
    let rows = read_trace_csv(&trace_path)?;

    let mut beta_csv = String::from("lambda,log_inv_lambda,beta,beta_over_loginvlambda\n");
    let mut la_csv = String::from("lambda,lambda_alpha\n");
    for r in rows.iter().filter(|r| r.converged) {
        let li = (1.0 / r.lambda).ln();
        beta_csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r.lambda),
            fmt_f64(li),
            fmt_f64(r.beta),
            fmt_f64(r.beta / li)
        ));
        la_csv.push_str(&format!("{},{}\n", fmt_f64(r.lambda), fmt_f64(r.lambda_alpha)));
    }
    let beta_path = ctx.out.join("export_beta.csv");
    std::fs::write(&beta_path, beta_csv).map_err(|e| CliError::io(&beta_path, e))?;
    let la_path = ctx.out.join("export_lambda_alpha.csv");
    std::fs::write(&la_path, la_csv).map_err(|e| CliError::io(&la_path, e))?;
    emit(&ctx.out, "  wrote export_beta.csv and export_lambda_alpha.csv");

    let profile_path = ctx.out.join("rescaled_profile.qcrv");
    let fit_path = ctx.out.join("bubble_fit.json");
    if profile_path.exists() && fit_path.exists() {
        let snap = read_snapshot(&profile_path)?;
        let text =
            std::fs::read_to_string(&fit_path).map_err(|e| CliError::io(&fit_path, e))?;
        let record: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::State(format!("{}: {e}", fit_path.display())))?;
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| {
                CliError::State(format!("{}: missing field {what}", fit_path.display()))
            })
        };
        let window = need(record["window"].as_f64(), "window")?;
        let s = need(record["fit"]["s"].as_f64(), "fit.s")?;
        let z0: Vec<f64> = record["fit"]["z0"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
            .unwrap_or_default();
        if z0.len() != snap.dimension as usize {
            return Err(CliError::State(format!(
                "{}: fit.z0 has {} coordinates, profile is {}-dimensional",
                fit_path.display(),
                z0.len(),
                snap.dimension
            )));
        }
        let profile = RescaledProfile::synthetic(
            snap.dimension,
            window,
            snap.grid as usize,
            snap.values,
        )?;
        let mut overlay: Vec<(f64, f64, f64)> = Vec::with_capacity(profile.values().len());
        for flat in 0..profile.values().len() {
            let z = profile.coords(flat);
            let z_abs = z.iter().map(|c| c * c).sum::<f64>().sqrt();
            let fitted = standard_bubble(snap.dimension, s, &z0, &z)?;
            overlay.push((z_abs, profile.values()[flat], fitted));
        }
        overlay.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut bubble_csv = String::from("z_abs,u_hat,fitted\n");
        for (z_abs, u_hat, fitted) in overlay {
            bubble_csv.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(z_abs),
                fmt_f64(u_hat),
                fmt_f64(fitted)
            ));
        }
        let bubble_path = ctx.out.join("export_bubble.csv");
        std::fs::write(&bubble_path, bubble_csv).map_err(|e| CliError::io(&bubble_path, e))?;
        emit(&ctx.out, "  wrote export_bubble.csv");
    }
    Ok(())
}

fn config_example_checks() -> CheckResult {
    let minimal = "dimension = 2\ngrid = 64\nprofile.l = 2\nschedule.lambda_hi = 0.3\n\
                   schedule.lambda_lo = 1e-3\nschedule.steps = 12\n";
    let ok = parse_config(minimal).is_ok();
    let dim = parse_config("dimension = 3\ngrid = 16\n")
        .err()
        .map(|e| e.to_string())
        .is_some_and(|m| m.contains("unsupported dimension") && m.contains("line 1"));
    let order = parse_config(
        "dimension = 2\ngrid = 16\nschedule.lambda_lo = 0.5\nschedule.lambda_hi = 0.1\n",
    )
    .err()
    .map(|e| e.to_string())
    .is_some_and(|m| m.contains("lambda_lo < lambda_hi"));
    let unknown = parse_config("dimension = 2\ngrid = 16\nwat = 1\n")
        .err()
        .map(|e| e.to_string())
        .is_some_and(|m| m.contains("unknown key") && m.contains("line 3"));
    let pass = ok && dim && order && unknown;
    CheckResult {
        name: "config parsing is total with line diagnostics",
        pass,
        detail: format!(
            "minimal {ok}, dimension {dim}, ordering {order}, unknown-key {unknown}"
        ),
    }
}

fn snapshot_roundtrip_check() -> CheckResult {
    let dir = std::env::temp_dir().join(format!("qcrv-verify-{}", std::process::id()));
    let run = || -> Result<String> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join("roundtrip.qcrv");
        let values: Vec<f64> = (0..64)
            .map(|i| match i % 4 {
                0 => -0.0,
                1 => 1.0 / 3.0 * i as f64,
                2 => -1e-308 * (i + 1) as f64,
                _ => std::f64::consts::PI.powi(i % 7),
            })
            .collect();
        let snap = Snapshot { dimension: 2, grid: 8, lambda: 1.0 / 7.0, values };
        write_snapshot(&path, &snap)?;
        let back = read_snapshot(&path)?;
        let exact = back.lambda.to_bits() == snap.lambda.to_bits()
            && snap
                .values
                .iter()
                .zip(&back.values)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if !exact {
            return Err(CliError::State("payload bits changed in the round trip".into()));
        }
        Ok("64 values and the header round-trip bit-exactly".to_string())
    };
    let result = run();
    let _ = std::fs::remove_dir_all(&dir);
    match result {
        Ok(detail) => CheckResult { name: "snapshot round-trip is bit-exact", pass: true, detail },
        Err(e) => CheckResult {
            name: "snapshot round-trip is bit-exact",
            pass: false,
            detail: e.to_string(),
        },
    }
}

pub fn verify(config_path: Option<&Path>) -> Result<()> {
    let mut results = qcrv::selfcheck::run_all();
    results.push(config_example_checks());
    results.push(snapshot_roundtrip_check());
    if let Some(path) = config_path {
        let outcome = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(path, e))
            .and_then(|text| parse_config(&text));
        results.push(match outcome {
            Ok(parsed) => CheckResult {
                name: "user config parses",
                pass: true,
                detail: format!(
                    "{}: valid, {} defaults applied",
                    path.display(),
                    parsed.applied_defaults.len()
                ),
            },
            Err(e) => CheckResult {
                name: "user config parses",
                pass: false,
                detail: e.to_string(),
            },
        });
    }

    let mut failed = 0usize;
    for r in &results {
        if r.pass {
            println!("ok   {} ({})", r.name, r.detail);
        } else {
            failed += 1;
            println!("FAIL {}: {}", r.name, r.detail);
        }
    }
    println!("{} checks, {failed} failed", results.len());
    if failed > 0 {
        Err(CliError::State(format!("{failed} invariant check(s) failed")))
    } else {
        Ok(())
    }
}
