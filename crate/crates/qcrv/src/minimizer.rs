//! Projected gradient minimization of E(u) = integral u Pu over the
//! constraint set {integral f e^(nu) = 0, integral e^(nu) = 1}.
//!
//! The iteration walks along the tangent component of the energy gradient and
//! retracts each trial back onto the constraint set by rescaling the
//! mean-zero part and re-normalizing the volume. Because P annihilates
//! constants and E is an exact quadratic form, the energy of a retracted
//! trial is t_eff^2 (E(u) - s g.g + s^2 g.Pg): line-search trials need one
//! scaling-root bisection each, never a transform.
//!
//! Stationarity is measured by the relative Euler-Lagrange residual
//! ||Pu - alpha f e^(nu)|| / ||alpha f e^(nu)|| with the multiplier alpha
//! extracted from the self-adjoint pairing alpha = <u, Pf> / integral f^2
//! e^(nu).

use crate::constraints::project_concentrating;
use crate::error::{QcrvError, Result};
use crate::grid::ScalarField;
use crate::par;
use crate::spectral::{apply_gjms, inner, norm_l2};

/// Largest allowed n * max(u) before exponential weights are refused.
const AMPLITUDE_CAP: f64 = 300.0;

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative Euler-Lagrange residual at which the iterate is accepted.
    pub el_residual_tol: f64,
    /// Step used on the first iteration (capped by the Cauchy step).
    pub initial_step: f64,
    /// Sufficient-decrease fraction for the backtracking line search.
    pub armijo_c: f64,
    pub step_shrink: f64,
    /// Smallest step the line search is allowed to try before giving up.
    pub min_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 20_000,
            el_residual_tol: 1e-6,
            initial_step: 1e-2,
            armijo_c: 1e-4,
            step_shrink: 0.5,
            min_step: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizerResult {
    /// The final iterate, on the constraint set.
    pub u: ScalarField,
    /// Euler-Lagrange multiplier of the final iterate.
    pub alpha: f64,
    /// Energy of the final iterate.
    pub beta: f64,
    /// Relative Euler-Lagrange residual of the final iterate.
    pub el_residual: f64,
    /// Completed gradient steps.
    pub iterations: usize,
    pub converged: bool,
    /// The line search ran out of step sizes before the residual target.
    pub step_floor_hit: bool,
    /// Accepted steps whose recomputed energy exceeded the previous one by
    /// more than round-off slack; should stay 0.
    pub energy_increase_events: usize,
}

/// Exponential constraint weights at u: v1 = f e^(nu), v2 = e^(nu).
struct Weights {
    v1: ScalarField,
    v2: ScalarField,
}

fn weights(u: &ScalarField, f: &ScalarField) -> Result<Weights> {
    let ne = u.grid().dim() as f64;
    let amp = ne * u.max();
    if amp > AMPLITUDE_CAP {
        return Err(QcrvError::AmplitudeOverflow(amp));
    }
    let v2 = u.map(|v| (ne * v).exp());
    let fv = f.values();
    let v2v = v2.values();
    let mut v1 = vec![0.0; fv.len()];
    par::fill_with(&mut v1, |i| fv[i] * v2v[i]);
    Ok(Weights { v1: ScalarField::from_values(u.grid(), v1)?, v2 })
}

/// c1 * a + c2 * b, pointwise.
fn lin2(c1: f64, a: &ScalarField, c2: f64, b: &ScalarField) -> ScalarField {
    let av = a.values();
    let bv = b.values();
    let mut out = vec![0.0; av.len()];
    par::fill_with(&mut out, |i| c1 * av[i] + c2 * bv[i]);
    ScalarField::from_values(a.grid(), out).expect("linear combination of finite fields")
}

/// Orthonormal basis of span{v2, v1} in L^2(d mu), volume direction first.
fn orthonormal_pair(w: &Weights) -> Result<(ScalarField, ScalarField)> {
    let n2 = norm_l2(&w.v2);
    if n2 <= 0.0 {
        return Err(QcrvError::DegenerateDenominator("volume weight has zero norm"));
    }
    let q1 = w.v2.scale(1.0 / n2);
    let c = inner(&w.v1, &q1)?;
    let r = lin2(1.0, &w.v1, -c, &q1);
    let nr = norm_l2(&r);
    if nr <= 1e-14 * norm_l2(&w.v1).max(1e-300) {
        return Err(QcrvError::DegenerateDenominator(
            "constraint weights are linearly dependent",
        ));
    }
    Ok((q1, r.scale(1.0 / nr)))
}

/// Remove the span{q1, q2} component; two passes for orthogonality near
/// round-off.
fn project_tangent(x: &ScalarField, q1: &ScalarField, q2: &ScalarField) -> Result<ScalarField> {
    let mut g = x.clone();
    for _ in 0..2 {
        let c1 = inner(&g, q1)?;
        let c2 = inner(&g, q2)?;
        let gv = g.values();
        let q1v = q1.values();
        let q2v = q2.values();
        let mut out = vec![0.0; gv.len()];
        par::fill_with(&mut out, |i| gv[i] - c1 * q1v[i] - c2 * q2v[i]);
        g = ScalarField::from_values(x.grid(), out)?;
    }
    Ok(g)
}

/// Multiplier estimate from the self-adjoint pairing with a precomputed Pf.
fn alpha_from_parts(
    u: &ScalarField,
    pf: &ScalarField,
    f: &ScalarField,
    v1: &ScalarField,
) -> Result<f64> {
    let num = inner(&u.add_scalar(-u.mean()), pf)?;
    let den = inner(f, v1)?;
    if den.abs() <= 1e-300 {
        return Err(QcrvError::DegenerateDenominator("integral f^2 e^(nu) vanished"));
    }
    Ok(num / den)
}

/// || pu - alpha v1 || / max(|| alpha v1 ||, floor).
fn residual_from_parts(pu: &ScalarField, v1: &ScalarField, alpha: f64) -> f64 {
    let r = lin2(1.0, pu, -alpha, v1);
    norm_l2(&r) / norm_l2(&v1.scale(alpha)).max(1e-30)
}

/// Euler-Lagrange multiplier of u for the weight f, alpha = <u, Pf> /
/// integral f^2 e^(nu) d mu. Exact when u is stationary; otherwise off by
/// <r, f> over the same denominator, r the residual.
pub fn extract_alpha(u: &ScalarField, f: &ScalarField) -> Result<f64> {
    let pf = apply_gjms(f)?;
    let w = weights(u, f)?;
    alpha_from_parts(u, &pf, f, &w.v1)
}

/// Relative Euler-Lagrange residual of u at the given multiplier.
pub fn el_residual(u: &ScalarField, f: &ScalarField, alpha: f64) -> Result<f64> {
    let w = weights(u, f)?;
    let pu = apply_gjms(u)?;
    Ok(residual_from_parts(&pu, &w.v1, alpha))
}

/// Minimize the energy over the constraint set from the given seed.
///
/// The seed may sit anywhere the retraction can reach: it is projected before
/// the first step (a constant seed has no projectable direction and fails).
pub fn minimize(seed: &ScalarField, f: &ScalarField, opts: &SolverOptions) -> Result<MinimizerResult> {
    let (mut u, _) = project_concentrating(seed, f, None)?;
    let mut pu = apply_gjms(&u)?;
    let mut beta = inner(&u, &pu)?;
    let pf = apply_gjms(f)?;

    let slack = |b: f64| 1e-13 * b.abs().max(1.0);
    let mut alpha = f64::NAN;
    let mut resid = f64::INFINITY;
    let mut converged = false;
    let mut step_floor_hit = false;
    let mut energy_increase_events = 0usize;
    let mut iterations = 0usize;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;

    for iter in 0..=opts.max_iters {
        let w = weights(&u, f)?;
        alpha = alpha_from_parts(&u, &pf, f, &w.v1)?;
        resid = residual_from_parts(&pu, &w.v1, alpha);
        if resid <= opts.el_residual_tol {
            converged = true;
            break;
        }
        if iter == opts.max_iters || step_floor_hit {
            break;
        }

        let (q1, q2) = orthonormal_pair(&w)?;
        let g = project_tangent(&pu.scale(2.0), &q1, &q2)?;
        let gg = inner(&g, &g)?;
        if gg <= 0.0 {
            // stationary to round-off but residual above tol: cannot improve
            step_floor_hit = true;
            continue;
        }
        debug_assert!(
            inner(&g, &w.v1).unwrap().abs() <= 1e-10 * gg.sqrt() * norm_l2(&w.v1).max(1e-300)
        );
        debug_assert!(
            inner(&g, &w.v2).unwrap().abs() <= 1e-10 * gg.sqrt() * norm_l2(&w.v2)
        );

        let pg = apply_gjms(&g)?;
        let gpg = inner(&g, &pg)?;
        let s_cauchy = if gpg > 0.0 { gg / (2.0 * gpg) } else { f64::INFINITY };

        let mut s = match &prev {
            None => opts.initial_step.min(s_cauchy),
            Some((u_prev, g_prev)) => {
                let uv = u.values();
                let gv = g.values();
                let ss = par::sum_map(uv.len(), |i| {
                    let d = uv[i] - u_prev[i];
                    d * d
                });
                let sy = par::sum_map(uv.len(), |i| (uv[i] - u_prev[i]) * (gv[i] - g_prev[i]));
                let bb = ss / sy;
                if sy > 0.0 && bb.is_finite() {
                    if s_cauchy.is_finite() {
                        bb.clamp(1e-3 * s_cauchy, 1e3 * s_cauchy)
                    } else {
                        bb
                    }
                } else if s_cauchy.is_finite() {
                    s_cauchy
                } else {
                    opts.initial_step
                }
            }
        };
        prev = Some((u.values().to_vec(), g.values().to_vec()));

        let mut accepted = false;
        while s >= opts.min_step {
            let trial = lin2(1.0, &u, -s, &g);
            match project_concentrating(&trial, f, None) {
                Ok((cand, t_eff)) => {
                    let e_trial = t_eff * t_eff * (beta - s * gg + s * s * gpg);
                    if e_trial <= beta - opts.armijo_c * s * gg + slack(beta) {
                        let pu_new = apply_gjms(&cand)?;
                        let beta_new = inner(&cand, &pu_new)?;
                        if beta_new > beta + slack(beta) {
                            energy_increase_events += 1;
                        }
                        u = cand;
                        pu = pu_new;
                        beta = beta_new;
                        accepted = true;
                        break;
                    }
                }
                // an overreaching trial can fail to project; shrink like a
                // failed decrease test
                Err(QcrvError::NoSignChange { .. }) => {}
                Err(e) => return Err(e),
            }
            s *= opts.step_shrink;
        }
        if accepted {
            iterations += 1;
        } else {
            step_floor_hit = true;
        }
    }

    Ok(MinimizerResult {
        u,
        alpha,
        beta,
        el_residual: resid,
        iterations,
        converged,
        step_floor_hit,
        energy_increase_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{make_profile, make_test_function};
    use crate::constraints::{check_constraints, normalize_volume};
    use crate::grid::TorusGrid;
    use crate::spectral::energy;
    use rand::{Rng, SeedableRng};

    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

    /// u with a known multiplier: pick u, set f = Pu / (alpha e^(nu)).
    /// Then Pu = alpha f e^(nu) holds identically and integral f e^(nu) =
    /// integral Pu / alpha = 0 exactly.
    fn manufactured(alpha_star: f64) -> (ScalarField, ScalarField) {
        let grid = TorusGrid::new(2, 16).unwrap();
        let raw = ScalarField::from_fn(grid, |x| {
            0.3 * (TWO_PI * x[0]).cos() + 0.2 * (TWO_PI * x[1]).sin()
                + 0.1 * (TWO_PI * (x[0] + x[1])).cos()
        })
        .unwrap();
        let u = normalize_volume(&raw).unwrap();
        let pu = apply_gjms(&u).unwrap();
        let ne = grid.dim() as f64;
        let uv = u.values();
        let f = ScalarField::from_values(
            grid,
            pu.values()
                .iter()
                .zip(uv)
                .map(|(p, v)| p / (alpha_star * (ne * v).exp()))
                .collect(),
        )
        .unwrap();
        (u, f)
    }

    #[test]
    fn multiplier_extraction_recovers_a_manufactured_multiplier() {
        let (u, f) = manufactured(3.0);
        let a = extract_alpha(&u, &f).unwrap();
        assert!((a - 3.0).abs() <= 1e-9, "alpha = {a:.12}");
        assert!(el_residual(&u, &f, a).unwrap() <= 1e-9);

        // least-squares cross-check: alpha_ls = <Pu, v1> / <v1, v1>
        let w = weights(&u, &f).unwrap();
        let pu = apply_gjms(&u).unwrap();
        let a_ls = inner(&pu, &w.v1).unwrap() / inner(&w.v1, &w.v1).unwrap();
        assert!((a_ls - 3.0).abs() <= 1e-9, "alpha_ls = {a_ls:.12}");
    }

    #[test]
    fn tangent_gradient_is_orthogonal_to_the_constraint_normals() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let profile = make_profile(grid, 2, 1.0, &[0.25, 0.25], None).unwrap();
        let f = profile.f_lambda(0.4);
        let seed = make_test_function(grid, &[0.25, 0.25], 4.0, 0.1).unwrap();
        let (u, _) = project_concentrating(&seed, &f, None).unwrap();
        let w = weights(&u, &f).unwrap();
        let (q1, q2) = orthonormal_pair(&w).unwrap();
        let pu = apply_gjms(&u).unwrap();
        let g = project_tangent(&pu.scale(2.0), &q1, &q2).unwrap();
        let gn = norm_l2(&g);
        assert!(inner(&g, &w.v1).unwrap().abs() <= 1e-10 * gn * norm_l2(&w.v1));
        assert!(inner(&g, &w.v2).unwrap().abs() <= 1e-10 * gn * norm_l2(&w.v2));
    }

    #[test]
    fn tangent_gradient_matches_finite_differences_through_the_retraction() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let profile = make_profile(grid, 2, 1.0, &[0.0, 0.0], None).unwrap();
        let f = profile.f_lambda(0.4);
        let seed = make_test_function(grid, &[0.0, 0.0], 3.0, 0.1).unwrap();
        let (u, _) = project_concentrating(&seed, &f, None).unwrap();
        let w = weights(&u, &f).unwrap();
        let (q1, q2) = orthonormal_pair(&w).unwrap();
        let pu = apply_gjms(&u).unwrap();
        let g = project_tangent(&pu.scale(2.0), &q1, &q2).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let noise = ScalarField::from_values(
            grid,
            (0..grid.point_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let xi = project_tangent(&noise, &q1, &q2).unwrap();

        let eps = 1e-5;
        let e_at = |t: f64| {
            let v = lin2(1.0, &u, t, &xi);
            let (p, _) = project_concentrating(&v, &f, None).unwrap();
            energy(&p).unwrap()
        };
        let fd = (e_at(eps) - e_at(-eps)) / (2.0 * eps);
        let pairing = inner(&g, &xi).unwrap();
        assert!(
            (fd - pairing).abs() <= 1e-6 * pairing.abs().max(1e-3),
            "fd = {fd:.10e}, <g, xi> = {pairing:.10e}"
        );
    }

    #[test]
    fn minimize_converges_and_lands_on_the_constraint_set() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let profile = make_profile(grid, 2, 1.0, &[0.5, 0.5], None).unwrap();
        let f = profile.f_lambda(0.5);
        let seed = make_test_function(grid, &[0.5, 0.5], 2.0, 0.1).unwrap();
        let res = minimize(&seed, &f, &SolverOptions::default()).unwrap();
        assert!(res.converged, "residual {:.3e} after {} iters", res.el_residual, res.iterations);
        assert!(res.el_residual <= 1e-6);
        assert!(res.beta >= 0.0);
        assert!(res.alpha.is_finite());
        assert_eq!(res.energy_increase_events, 0);
        assert!(check_constraints(&res.u, &f).unwrap().pass());

        // the multiplier the solver reports is the stationarity multiplier
        let a2 = extract_alpha(&res.u, &f).unwrap();
        assert!((a2 - res.alpha).abs() <= 1e-12 * a2.abs().max(1.0));
    }

    #[test]
    fn minimize_reaches_the_same_energy_from_different_seeds() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let profile = make_profile(grid, 2, 1.0, &[0.5, 0.5], None).unwrap();
        let f = profile.f_lambda(0.5);
        let a = minimize(
            &make_test_function(grid, &[0.5, 0.5], 2.0, 0.1).unwrap(),
            &f,
            &SolverOptions::default(),
        )
        .unwrap();
        let b = minimize(
            &make_test_function(grid, &[0.5, 0.5], 6.0, 0.08).unwrap(),
            &f,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(a.converged && b.converged);
        assert!(
            (a.beta - b.beta).abs() <= 1e-4 * a.beta.abs().max(1.0),
            "beta_a = {:.10e}, beta_b = {:.10e}",
            a.beta,
            b.beta
        );
    }

    #[test]
    fn weights_refuse_overflowing_amplitudes() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let profile = make_profile(grid, 2, 1.0, &[0.0, 0.0], None).unwrap();
        let f = profile.f_lambda(0.5);
        let huge = ScalarField::constant(grid, 200.0).unwrap();
        assert!(matches!(weights(&huge, &f), Err(QcrvError::AmplitudeOverflow(_))));
    }

    #[test]
    fn constant_seed_is_rejected() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let profile = make_profile(grid, 2, 1.0, &[0.0, 0.0], None).unwrap();
        let f = profile.f_lambda(0.5);
        let seed = ScalarField::constant(grid, 1.0).unwrap();
        assert!(matches!(
            minimize(&seed, &f, &SolverOptions::default()),
            Err(QcrvError::NoSignChange { .. })
        ));
    }
}
