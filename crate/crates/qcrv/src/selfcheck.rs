//! Fast, deterministic invariant checks over every module, runnable from a
//! shipped binary (no test harness, no external RNG). Each check reuses the
//! library's own pure functions and compares against frozen constants or
//! internal cross-checks; the full suite takes well under a minute.

use crate::analytic::{
    bubble_mass_radial, make_test_function, standard_bubble, verify_bubble_pde,
};
use crate::bubble::{fit_standard_bubble, RescaledProfile, SplineInterpolant};
use crate::constraints::{check_constraints, project_to_mstar, scaling_root};
use crate::continuation::{check_monotone, ContinuationTrace, TraceRecord};
use crate::grid::{ScalarField, TorusGrid};
use crate::minimizer::extract_alpha;
use crate::par;
use crate::spectral::{
    apply_gjms, apply_gjms_dense, energy, energy_parseval, norm_l2, GjmsMultiplier,
};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// splitmix64: tiny deterministic generator for seeded check fields.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn seeded_field(grid: TorusGrid, seed: u64) -> ScalarField {
    let mut state = seed;
    let values: Vec<f64> = (0..grid.point_count())
        .map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        .collect();
    ScalarField::from_values(grid, values).expect("seeded field is finite")
}

fn check(name: &'static str, body: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match body() {
        Ok(detail) => CheckResult { name, pass: true, detail },
        Err(detail) => CheckResult { name, pass: false, detail },
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

/// Run every invariant suite; the caller decides how to report.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("multiplier frozen eigenvalues", || {
            let m2 = GjmsMultiplier::new(2).map_err(|e| e.to_string())?;
            let m4 = GjmsMultiplier::new(4).map_err(|e| e.to_string())?;
            let e2 = rel_err(m2.value(&[1, 0]), 39.47841760435743);
            let e4 = rel_err(m4.value(&[1, 1, 0, 0]), 6234.181826176157);
            ensure(e2 <= 1e-12 && e4 <= 1e-12, format!("rel errors {e2:.2e}, {e4:.2e}"))?;
            Ok(format!("rel errors {e2:.2e}, {e4:.2e}"))
        }),
        check("first mode is an eigenfunction", || {
            let grid = TorusGrid::new(2, 16).map_err(|e| e.to_string())?;
            let tau = 2.0 * std::f64::consts::PI;
            let u = ScalarField::from_fn(grid, |x| (tau * x[0]).cos()).map_err(|e| e.to_string())?;
            let pu = apply_gjms(&u).map_err(|e| e.to_string())?;
            let lam = 39.47841760435743;
            let diff = ScalarField::from_values(
                grid,
                pu.values().iter().zip(u.values()).map(|(a, b)| a - lam * b).collect(),
            )
            .map_err(|e| e.to_string())?;
            let rel = norm_l2(&diff) / (lam * norm_l2(&u));
            ensure(rel <= 1e-10, format!("relative defect {rel:.2e}"))?;
            Ok(format!("relative defect {rel:.2e}"))
        }),
        check("closed-form energies", || {
            let tau = 2.0 * std::f64::consts::PI;
            let g2 = TorusGrid::new(2, 16).map_err(|e| e.to_string())?;
            let u2 = ScalarField::from_fn(g2, |x| (tau * x[0]).cos()).map_err(|e| e.to_string())?;
            let e2 = rel_err(energy(&u2).map_err(|e| e.to_string())?, 19.739208802178716);
            let g4 = TorusGrid::new(4, 8).map_err(|e| e.to_string())?;
            let u4 = ScalarField::from_fn(g4, |x| (tau * x[0]).cos()).map_err(|e| e.to_string())?;
            let e4 = rel_err(energy(&u4).map_err(|e| e.to_string())?, 779.2727282720195);
            ensure(e2 <= 1e-10 && e4 <= 1e-10, format!("rel errors {e2:.2e}, {e4:.2e}"))?;
            Ok(format!("rel errors {e2:.2e}, {e4:.2e}"))
        }),
        check("spectral operator matches dense oracle", || {
            let mut worst = 0.0f64;
            for (dim, n) in [(2u32, 8u32), (4, 8)] {
                let grid = TorusGrid::new(dim, n).map_err(|e| e.to_string())?;
                for seed in 0..3u64 {
                    let u = seeded_field(grid, 1000 * dim as u64 + seed);
                    let fast = apply_gjms(&u).map_err(|e| e.to_string())?;
                    let dense = apply_gjms_dense(&u).map_err(|e| e.to_string())?;
                    let diff = ScalarField::from_values(
                        grid,
                        fast.values().iter().zip(dense.values()).map(|(a, b)| a - b).collect(),
                    )
                    .map_err(|e| e.to_string())?;
                    let denom = norm_l2(&dense).max(1e-300);
                    worst = worst.max(norm_l2(&diff) / denom);
                }
            }
            ensure(worst <= 1e-10, format!("worst relative L2 gap {worst:.2e}"))?;
            Ok(format!("worst relative L2 gap {worst:.2e}"))
        }),
        check("physical and spectral energies agree", || {
            let grid = TorusGrid::new(2, 16).map_err(|e| e.to_string())?;
            let u = seeded_field(grid, 42);
            let a = energy(&u).map_err(|e| e.to_string())?;
            let b = energy_parseval(&u).map_err(|e| e.to_string())?;
            let rel = rel_err(a, b);
            ensure(rel <= 1e-10, format!("relative gap {rel:.2e}"))?;
            Ok(format!("relative gap {rel:.2e}"))
        }),
        check("parallel and sequential reductions agree bitwise", || {
            let data: Vec<f64> = {
                let mut state = 7u64;
                (0..10_000)
                    .map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
                    .collect()
            };
            let s_par = par::sum(&data);
            let s_seq = par::sum_seq(&data);
            let d_par = par::dot(&data, &data);
            let d_seq = par::dot_seq(&data, &data);
            ensure(
                s_par.to_bits() == s_seq.to_bits() && d_par.to_bits() == d_seq.to_bits(),
                format!("sum {s_par:e} vs {s_seq:e}, dot {d_par:e} vs {d_seq:e}"),
            )?;
            Ok("sum and dot bitwise identical".into())
        }),
        check("constraint projection is idempotent", || {
            let grid = TorusGrid::new(2, 16).map_err(|e| e.to_string())?;
            let profile = crate::analytic::make_profile(grid, 2, 1.0, &[0.0, 0.0], None)
                .map_err(|e| e.to_string())?;
            let f = profile.f_lambda(0.5);
            let base = make_test_function(grid, &[0.0, 0.0], 8.0, 0.1)
                .map_err(|e| e.to_string())?;
            let seed = ScalarField::from_values(
                grid,
                base.values().iter().map(|v| 3.0 * (v - base.mean())).collect(),
            )
            .map_err(|e| e.to_string())?;
            let u = project_to_mstar(&seed, &f).map_err(|e| e.to_string())?;
            let report = check_constraints(&u, &f).map_err(|e| e.to_string())?;
            ensure(report.pass(), format!("g1 = {:e}, g2 = {:e}", report.g1, report.g2))?;
            let again = project_to_mstar(&u, &f).map_err(|e| e.to_string())?;
            let drift = u
                .values()
                .iter()
                .zip(again.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            ensure(drift <= 1e-10, format!("re-projection drift {drift:.2e}"))?;
            Ok(format!("constraints pass, re-projection drift {drift:.2e}"))
        }),
        check("scaling root inverts field doubling", || {
            let grid = TorusGrid::new(2, 16).map_err(|e| e.to_string())?;
            let profile = crate::analytic::make_profile(grid, 2, 1.0, &[0.0, 0.0], None)
                .map_err(|e| e.to_string())?;
            let f = profile.f_lambda(0.5);
            let base = make_test_function(grid, &[0.0, 0.0], 8.0, 0.1)
                .map_err(|e| e.to_string())?;
            let u = ScalarField::from_values(
                grid,
                base.values().iter().map(|v| 3.0 * (v - base.mean())).collect(),
            )
            .map_err(|e| e.to_string())?;
            let t1 = scaling_root(&u, &f).map_err(|e| e.to_string())?;
            let doubled = ScalarField::from_values(
                grid,
                u.values().iter().map(|v| 2.0 * v).collect(),
            )
            .map_err(|e| e.to_string())?;
            let t2 = scaling_root(&doubled, &f).map_err(|e| e.to_string())?;
            let gap = (t2 - 0.5 * t1).abs();
            ensure(gap <= 1e-9, format!("t(2u) - t(u)/2 = {gap:.2e}"))?;
            Ok(format!("t(2u) - t(u)/2 = {gap:.2e}"))
        }),
        check("manufactured multiplier is recovered", || {
            let grid = TorusGrid::new(2, 16).map_err(|e| e.to_string())?;
            let tau = 2.0 * std::f64::consts::PI;
            let raw = ScalarField::from_fn(grid, |x| {
                0.3 * (tau * x[0]).cos() + 0.2 * (tau * x[1]).sin()
            })
            .map_err(|e| e.to_string())?;
            let u = crate::constraints::normalize_volume(&raw).map_err(|e| e.to_string())?;
            let pu = apply_gjms(&u).map_err(|e| e.to_string())?;
            let f = ScalarField::from_values(
                grid,
                pu.values()
                    .iter()
                    .zip(u.values())
                    .map(|(p, v)| p / (3.0 * (2.0 * v).exp()))
                    .collect(),
            )
            .map_err(|e| e.to_string())?;
            let alpha = extract_alpha(&u, &f).map_err(|e| e.to_string())?;
            let gap = (alpha - 3.0).abs();
            ensure(gap <= 1e-8, format!("alpha = {alpha}, gap {gap:.2e}"))?;
            Ok(format!("alpha gap {gap:.2e}"))
        }),
        check("bubble density has unit mass", || {
            let e2 = (bubble_mass_radial(2, 1.3, 1e9).map_err(|e| e.to_string())? - 1.0).abs();
            let e4 = (bubble_mass_radial(4, 0.7, 1e9).map_err(|e| e.to_string())? - 1.0).abs();
            ensure(e2 <= 1e-8 && e4 <= 1e-8, format!("mass defects {e2:.2e}, {e4:.2e}"))?;
            Ok(format!("mass defects {e2:.2e}, {e4:.2e}"))
        }),
        check("bubble solves its curvature equation", || {
            let r2 = verify_bubble_pde(2, 0.9).map_err(|e| e.to_string())?;
            let r4 = verify_bubble_pde(4, 1.1).map_err(|e| e.to_string())?;
            ensure(r2 <= 1e-6 && r4 <= 1e-4, format!("residuals {r2:.2e}, {r4:.2e}"))?;
            Ok(format!("residuals {r2:.2e}, {r4:.2e}"))
        }),
        check("spline interpolation is cardinal", || {
            let grid = TorusGrid::new(2, 16).map_err(|e| e.to_string())?;
            let u = seeded_field(grid, 99);
            let sp = SplineInterpolant::new(&u);
            let mut worst = 0.0f64;
            for flat in 0..grid.point_count() {
                let x = grid.coords(flat);
                worst = worst.max((sp.eval(&x[..2]) - u.values()[flat]).abs());
            }
            ensure(worst <= 1e-12, format!("worst node defect {worst:.2e}"))?;
            Ok(format!("worst node defect {worst:.2e}"))
        }),
        check("bubble fit recovers exact parameters", || {
            let m = 32usize;
            let window = 8.0;
            let proto = RescaledProfile::synthetic(2, window, m, vec![0.0; m * m])
                .map_err(|e| e.to_string())?;
            let mut values = vec![0.0; m * m];
            for (flat, value) in values.iter_mut().enumerate() {
                let z = proto.coords(flat);
                *value = standard_bubble(2, 1.7, &[0.2, -0.3], &z).map_err(|e| e.to_string())?;
            }
            let p = RescaledProfile::synthetic(2, window, m, values).map_err(|e| e.to_string())?;
            let fit = fit_standard_bubble(&p).map_err(|e| e.to_string())?;
            let gap = (fit.s - 1.7)
                .abs()
                .max((fit.z0[0] - 0.2).abs())
                .max((fit.z0[1] + 0.3).abs());
            ensure(
                fit.converged && gap <= 1e-6,
                format!("parameter gap {gap:.2e}, converged {}", fit.converged),
            )?;
            Ok(format!("parameter gap {gap:.2e}"))
        }),
        check("energy curve monotonicity detector", || {
            let mk = |betas: &[f64]| ContinuationTrace {
                records: betas
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| TraceRecord {
                        lambda: 0.3 * 0.5f64.powi(i as i32),
                        beta: b,
                        alpha: 1.0,
                        lambda_alpha: 0.3,
                        el_residual: 1e-9,
                        iterations: 1,
                        converged: true,
                        constraint_pass: true,
                        bubble: None,
                    })
                    .collect(),
            };
            let grow = check_monotone(&mk(&[1.0, 2.0, 3.0]));
            let flat = check_monotone(&mk(&[1.0, 1.0, 3.0]));
            ensure(
                grow.pass && !flat.pass,
                format!("growing pass = {}, flat pass = {}", grow.pass, flat.pass),
            )?;
            Ok("direction detector agrees on synthetic curves".into())
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_selfcheck_passes() {
        let results = run_all();
        for r in &results {
            assert!(r.pass, "{}: {}", r.name, r.detail);
        }
        assert!(results.len() >= 12);
    }

    #[test]
    fn seeded_fields_are_deterministic() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let a = seeded_field(grid, 5);
        let b = seeded_field(grid, 5);
        assert_eq!(a.values(), b.values());
        let c = seeded_field(grid, 6);
        assert_ne!(a.values(), c.values());
    }
}
