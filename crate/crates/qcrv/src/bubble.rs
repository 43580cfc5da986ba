//! Concentration diagnostics: where the conformal density e^(nu) piles up,
//! how wide the pile is, and how closely the rescaled profile matches the
//! standard spherical bubble log(2s/(s^2+|z-z0|^2)) - log|S^n|/n.
//!
//! The selection rule fixes the ball mass at 1/8: the center is the density
//! argmax and the radius solves M(r) = 1/8, where M uses fractional boundary
//! cell weights so it is continuous and strictly increasing in r (a sharp
//! indicator sum is a step function and cannot meet a 1e-6 mass tolerance).

use crate::analytic::sphere_area;
use crate::error::{QcrvError, Result};
use crate::fft::{bin_frequency, engine};
use crate::grid::{ScalarField, TorusGrid};
use crate::par;
use crate::spectral::log_exp_integral;

/// The paper-fixed concentration mass.
pub const CONCENTRATION_MASS: f64 = 0.125;
/// |M(r) - mass| tolerance of the selected radius.
const MASS_TOL: f64 = 1e-6;
/// Volume normalization tolerance required of select_radius inputs.
const VOLUME_PRE_TOL: f64 = 1e-6;
/// Relative window-mass mismatch allowed between the original grid and the
/// rescaled lattice.
const DENSITY_CONSISTENCY_TOL: f64 = 0.02;
/// Levenberg iteration cap.
const FIT_MAX_ITERS: usize = 200;
/// Slack for the non-increasing flatness tail.
const FLATNESS_SLACK: f64 = 0.10;

#[derive(Clone, Debug)]
pub struct ConcentrationSelection {
    /// Torus coordinates of the selected center (a grid point).
    pub center: Vec<f64>,
    pub center_index: usize,
    pub radius: f64,
    pub achieved_mass: f64,
    /// Re-centering rounds taken by the verification pass.
    pub rounds: usize,
    /// A ball of the same radius centered farther than 4 r away also reaches
    /// the target mass: a second cluster the diagnostics cannot adjudicate.
    pub cluster_warning: bool,
}

/// Fractional covering weight of a cell at distance d from the center, for
/// ball radius r: 1 inside, 0 outside, linear across the +-h/2 boundary band.
#[inline]
fn cell_weight(r: f64, d: f64, h: f64) -> f64 {
    ((r - d) / h + 0.5).clamp(0.0, 1.0)
}

/// M(r) around one center, from precomputed per-point density masses and
/// distances.
fn ball_mass(density: &[f64], dist: &[f64], h: f64, r: f64) -> f64 {
    par::sum_map(density.len(), |i| density[i] * cell_weight(r, dist[i], h))
}

/// Solve M(r) = mass on (0, 1/4] by bisection.
fn mass_radius(density: &[f64], dist: &[f64], h: f64, mass: f64) -> Result<f64> {
    let mut lo = 0.0f64;
    let mut hi = 0.25f64;
    if ball_mass(density, dist, h, hi) < mass {
        return Err(QcrvError::NoConcentration(format!(
            "mass {mass} needs radius >= 1/4: density too spread out"
        )));
    }
    if ball_mass(density, dist, h, lo) >= mass {
        return Err(QcrvError::NoConcentration(format!(
            "mass {mass} is reached below one cell: density concentrates under grid resolution"
        )));
    }
    while hi - lo > 0.25 * f64::EPSILON {
        let mid = 0.5 * (lo + hi);
        if ball_mass(density, dist, h, mid) < mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);
    let achieved = ball_mass(density, dist, h, r);
    if (achieved - mass).abs() > MASS_TOL {
        return Err(QcrvError::Postcondition {
            context: "select_radius: |M(r) - mass|",
            deviation: achieved - mass,
        });
    }
    Ok(r)
}

/// Ball masses at radius r around every grid center at once, by circular
/// convolution of the density with the fractional ball kernel.
fn all_ball_masses(grid: TorusGrid, density: &[f64], r: f64) -> Vec<f64> {
    let h = grid.spacing();
    let origin = [0.0; crate::grid::MAX_DIM];
    let dim = grid.dim() as usize;
    let mut kernel = vec![0.0; density.len()];
    par::fill_with(&mut kernel, |i| {
        let x = grid.coords(i);
        cell_weight(r, grid.periodic_dist(&x[..dim], &origin[..dim]), h)
    });
    let eng = engine(grid);
    let mut spec = eng.forward(density);
    let kspec = eng.forward(&kernel);
    for (a, b) in spec.iter_mut().zip(kspec) {
        *a *= b;
    }
    eng.inverse_real(spec)
}

fn distances_from(grid: TorusGrid, center: &[f64]) -> Vec<f64> {
    let dim = grid.dim() as usize;
    let mut dist = vec![0.0; grid.point_count()];
    par::fill_with(&mut dist, |i| {
        let x = grid.coords(i);
        grid.periodic_dist(&x[..dim], center)
    });
    dist
}

/// Select the concentration center and the radius of target ball mass.
///
/// The center starts at the grid argmax of u; after the radius bisection, a
/// verification pass computes ball masses around every grid point (one
/// convolution) and re-centers if any point within distance 2r beats the
/// current center, up to 5 rounds. Requires a volume-normalized u.
pub fn select_radius(u: &ScalarField, mass: f64) -> Result<ConcentrationSelection> {
    if !(mass > 0.0 && mass < 0.5) {
        return Err(QcrvError::InvalidParameter {
            name: "mass",
            message: format!("target ball mass must lie in (0, 1/2), got {mass}"),
        });
    }
    let grid = u.grid();
    let ne = grid.dim() as f64;
    if log_exp_integral(u, grid.dim()).abs() > VOLUME_PRE_TOL {
        return Err(QcrvError::InvalidParameter {
            name: "u",
            message: "select_radius needs a volume-normalized field".into(),
        });
    }
    let h = grid.spacing();
    let cell = grid.cell_measure();
    let density: Vec<f64> = u.values().iter().map(|&v| (ne * v).exp() * cell).collect();

    let dim = grid.dim() as usize;
    let (_, mut center_index) = u.argmax();
    let mut rounds = 0usize;
    loop {
        let center: Vec<f64> = grid.coords(center_index)[..dim].to_vec();
        let dist = distances_from(grid, &center);
        let radius = mass_radius(&density, &dist, h, mass)?;
        let achieved = ball_mass(&density, &dist, h, radius);

        let masses = all_ball_masses(grid, &density, radius);
        // best center in the 2r neighborhood; ties keep the smaller index
        let mut best_index = center_index;
        let mut best_mass = masses[center_index];
        for (i, &m) in masses.iter().enumerate() {
            let x = grid.coords(i);
            if grid.periodic_dist(&x[..dim], &center) <= 2.0 * radius && m > best_mass + 1e-9 {
                best_index = i;
                best_mass = m;
            }
        }
        if best_index != center_index && rounds < 5 {
            center_index = best_index;
            rounds += 1;
            continue;
        }

        // second-cluster scan: the strongest ball beyond 4r
        let mut distant_peak = 0.0f64;
        for (i, &m) in masses.iter().enumerate() {
            let x = grid.coords(i);
            if grid.periodic_dist(&x[..dim], &center) > 4.0 * radius {
                distant_peak = distant_peak.max(m);
            }
        }
        return Ok(ConcentrationSelection {
            center,
            center_index,
            radius,
            achieved_mass: achieved,
            rounds,
            cluster_warning: distant_peak >= mass,
        });
    }
}

/// Periodic cubic B-spline interpolant of a grid field: an FFT prefilter
/// turns samples into spline coefficients (dividing each axis by
/// (4 + 2 cos(2 pi k / N)) / 6), and evaluation blends 4 taps per axis.
/// Reproduces node values and is O(h^4) accurate on smooth fields.
pub(crate) struct SplineInterpolant {
    grid: TorusGrid,
    coeffs: Vec<f64>,
}

impl SplineInterpolant {
    pub(crate) fn new(u: &ScalarField) -> Self {
        let grid = u.grid();
        let n = grid.points_per_axis();
        let dim = grid.dim();
        let eng = engine(grid);
        let mut spec = eng.forward(u.values());
        let b_axis: Vec<f64> = (0..n)
            .map(|i| {
                let k = bin_frequency(i, n) as f64;
                (4.0 + 2.0 * (2.0 * std::f64::consts::PI * k / n as f64).cos()) / 6.0
            })
            .collect();
        for (flat, v) in spec.iter_mut().enumerate() {
            let mi = grid.multi_index(flat);
            let mut b = 1.0;
            for d in 0..dim as usize {
                b *= b_axis[mi[d] as usize];
            }
            *v /= b;
        }
        let coeffs = eng.inverse_real(spec);
        SplineInterpolant { grid, coeffs }
    }

    /// Evaluate at torus coordinates (any reals; wrapped periodically).
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let n = self.grid.points_per_axis() as i64;
        let dim = self.grid.dim() as usize;
        let mut taps = [[0usize; 4]; crate::grid::MAX_DIM];
        let mut weights = [[0.0f64; 4]; crate::grid::MAX_DIM];
        for d in 0..dim {
            let g = x[d] * n as f64;
            let base = g.floor();
            let t = g - base;
            let base = base as i64;
            for (j, tap) in taps[d].iter_mut().enumerate() {
                *tap = (base - 1 + j as i64).rem_euclid(n) as usize;
            }
            let t2 = t * t;
            let t3 = t2 * t;
            weights[d] = [
                (1.0 - t).powi(3) / 6.0,
                (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
                (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
                t3 / 6.0,
            ];
        }
        // tensor blend over 4^dim coefficient taps (row-major strides)
        let n_us = self.grid.points_per_axis() as usize;
        let mut strides = [0usize; crate::grid::MAX_DIM];
        let mut s = 1usize;
        for d in (0..dim).rev() {
            strides[d] = s;
            s *= n_us;
        }
        let mut acc = 0.0;
        for c in 0..(1usize << (2 * dim)) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for d in 0..dim {
                let j = (c >> (2 * d)) & 3;
                w *= weights[d][j];
                flat += taps[d][j] * strides[d];
            }
            acc += w * self.coeffs[flat];
        }
        acc
    }
}

/// A rescaled window u_hat(z) = u(x + r z) + log r sampled on the midpoint
/// lattice of [-R, R]^n with m points per axis.
#[derive(Clone, Debug)]
pub struct RescaledProfile {
    dim: u32,
    r: f64,
    window: f64,
    m: usize,
    values: Vec<f64>,
    center: Vec<f64>,
    /// Relative mismatch between the window mass on the original grid and
    /// the rescaled lattice Riemann sum.
    density_mismatch: f64,
}

impl RescaledProfile {
    /// Wrap externally generated lattice values (tests, synthetic data).
    pub fn synthetic(dim: u32, window: f64, m: usize, values: Vec<f64>) -> Result<Self> {
        validate_lattice(dim, window, m, values.len())?;
        Ok(RescaledProfile {
            dim,
            r: 1.0,
            window,
            m,
            values,
            center: vec![0.0; dim as usize],
            density_mismatch: 0.0,
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn window(&self) -> f64 {
        self.window
    }
    pub fn points_per_axis(&self) -> usize {
        self.m
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn center(&self) -> &[f64] {
        &self.center
    }
    pub fn density_mismatch(&self) -> f64 {
        self.density_mismatch
    }

    /// Lattice spacing 2R/m.
    pub fn lattice_step(&self) -> f64 {
        2.0 * self.window / self.m as f64
    }

    /// Coordinate of lattice index j along one axis.
    pub fn axis_coord(&self, j: usize) -> f64 {
        -self.window + (j as f64 + 0.5) * self.lattice_step()
    }

    /// Rescaled coordinates of a flat lattice index.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let dim = self.dim as usize;
        let mut out = vec![0.0; dim];
        let mut rem = flat;
        for d in (0..dim).rev() {
            out[d] = self.axis_coord(rem % self.m);
            rem /= self.m;
        }
        out
    }
}

fn validate_lattice(dim: u32, window: f64, m: usize, len: usize) -> Result<()> {
    if !(dim == 2 || dim == 4) {
        return Err(QcrvError::UnsupportedDimension(dim));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(QcrvError::InvalidParameter {
            name: "window",
            message: format!("window half-width must be positive, got {window}"),
        });
    }
    if m < 4 {
        return Err(QcrvError::InvalidParameter {
            name: "m",
            message: format!("lattice needs at least 4 points per axis, got {m}"),
        });
    }
    let expect = m.pow(dim);
    if len != expect {
        return Err(QcrvError::InvalidParameter {
            name: "values",
            message: format!("lattice of {m}^{dim} needs {expect} values, got {len}"),
        });
    }
    Ok(())
}

/// Zoom into the selected ball: u_hat(z) = u(x + r z) + log r on the midpoint
/// lattice of [-R, R]^n, via periodic cubic spline interpolation. The window
/// must stay inside the injectivity radius of the torus chart: r R <= 1/4.
///
/// Change of variables makes integral e^(n u_hat) dz over the window equal
/// the window mass of e^(nu); both sides are measured (grid sum with
/// fractional edge weights vs lattice Riemann sum) and must agree within 2%.
pub fn rescale(
    u: &ScalarField,
    sel: &ConcentrationSelection,
    window: f64,
    m: usize,
) -> Result<RescaledProfile> {
    let grid = u.grid();
    let dim = grid.dim();
    validate_lattice(dim, window, m, m.pow(dim))?;
    let r = sel.radius;
    if r * window > 0.25 {
        return Err(QcrvError::WindowExceedsChart(r * window));
    }
    let spline = SplineInterpolant::new(u);
    let d = dim as usize;
    let log_r = r.ln();
    let step = 2.0 * window / m as f64;
    let mut values = vec![0.0; m.pow(dim)];
    let m_us = m;
    par::fill_with(&mut values, |flat| {
        let mut x = [0.0f64; crate::grid::MAX_DIM];
        let mut rem = flat;
        for axis in (0..d).rev() {
            let z = -window + (rem % m_us) as f64 * step + 0.5 * step;
            x[axis] = sel.center[axis] + r * z;
            rem /= m_us;
        }
        spline.eval(&x[..d]) + log_r
    });
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(QcrvError::NonFinite { context: "rescaled profile", index: i });
        }
    }

    // window-mass consistency: lattice Riemann sum vs original-grid cube sum
    let ne = dim as f64;
    let lattice_mass =
        par::sum_map(values.len(), |i| (ne * values[i]).exp()) * step.powi(dim as i32);
    let h = grid.spacing();
    let cell = grid.cell_measure();
    let half = r * window;
    let grid_mass = par::sum_map(grid.point_count(), |i| {
        let x = grid.coords(i);
        let mut w = (ne * u.values()[i]).exp() * cell;
        for axis in 0..d {
            let dx = crate::grid::periodic_delta(x[axis] - sel.center[axis]).abs();
            w *= cell_weight(half, dx, h);
        }
        w
    });
    let mismatch = (lattice_mass - grid_mass).abs() / grid_mass.max(1e-300);
    if mismatch > DENSITY_CONSISTENCY_TOL {
        return Err(QcrvError::Postcondition {
            context: "rescale: window-mass mismatch between grid and lattice",
            deviation: mismatch,
        });
    }

    Ok(RescaledProfile {
        dim,
        r,
        window,
        m,
        values,
        center: sel.center.clone(),
        density_mismatch: mismatch,
    })
}

#[derive(Clone, Debug)]
pub struct BubbleFit {
    pub s: f64,
    pub z0: Vec<f64>,
    /// Sup-norm residual over the fit ball |z| <= r_fit.
    pub linf_residual: f64,
    pub rms_residual: f64,
    pub r_fit: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve the k x k normal system (in place); returns None when singular.
fn solve_dense(a: &mut [[f64; 5]; 5], b: &mut [f64; 5], k: usize) -> Option<[f64; 5]> {
    for col in 0..k {
        let mut pivot = col;
        for row in col + 1..k {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for c in col..k {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 5];
    for row in (0..k).rev() {
        let mut v = b[row];
        for c in row + 1..k {
            v -= a[row][c] * x[c];
        }
        x[row] = v / a[row][row];
    }
    Some(x)
}

/// Fit the standard bubble to a rescaled profile over |z| <= window/2 by
/// Levenberg-damped Gauss-Newton in (s, z0). The additive constant is pinned
/// by the unit-volume normalization (-log|S^n| / n), so only scale and
/// center are free. A diverging fit reports linf = infinity instead of
/// erroring: non-bubble data is an answer, not a failure.
pub fn fit_standard_bubble(profile: &RescaledProfile) -> Result<BubbleFit> {
    let dim = profile.dim;
    let n = dim as f64;
    let r_fit = 0.5 * profile.window();
    let const_term = -(sphere_area(dim)?.ln()) / n;

    // fit points: lattice nodes inside the fit ball
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
    for flat in 0..profile.values().len() {
        let z = profile.coords(flat);
        if z.iter().map(|c| c * c).sum::<f64>() <= r_fit * r_fit {
            pts.push((z, profile.values()[flat]));
        }
    }
    if pts.len() < (dim as usize + 2) * 3 {
        return Err(QcrvError::InsufficientData(format!(
            "bubble fit needs more lattice points inside |z| <= {r_fit}, have {}",
            pts.len()
        )));
    }

    // init: density centroid and half-max width
    let weights: Vec<f64> = pts.iter().map(|(_, v)| (n * v).exp()).collect();
    let wsum: f64 = weights.iter().sum();
    let d = dim as usize;
    let mut z0 = vec![0.0; d];
    for (w, (z, _)) in weights.iter().zip(&pts) {
        for a in 0..d {
            z0[a] += w * z[a] / wsum;
        }
    }
    let wmax = weights.iter().cloned().fold(0.0f64, f64::max);
    let above = weights.iter().filter(|&&w| w >= 0.5 * wmax).count() as f64;
    let step = profile.lattice_step();
    let area = above * step.powi(dim as i32);
    let rho_half = match dim {
        2 => (area / std::f64::consts::PI).sqrt(),
        _ => (2.0 * area / (std::f64::consts::PI * std::f64::consts::PI)).powf(0.25),
    };
    let mut s = (rho_half / (2.0f64.powf(1.0 / n) - 1.0).sqrt()).clamp(1e-6, 1e6);

    let sse = |s: f64, z0: &[f64]| -> (f64, f64) {
        let mut total = 0.0;
        let mut linf = 0.0f64;
        for (z, v) in &pts {
            let q: f64 = z.iter().zip(z0).map(|(a, b)| (a - b) * (a - b)).sum();
            let res = v - const_term - (2.0 * s).ln() + (s * s + q).ln();
            total += res * res;
            linf = linf.max(res.abs());
        }
        (total, linf)
    };

    let k = d + 1;
    let mut mu = 1e-3;
    let (mut current_sse, _) = sse(s, &z0);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..FIT_MAX_ITERS {
        iterations = iter + 1;
        // normal equations J^T J and J^T r
        let mut h = [[0.0f64; 5]; 5];
        let mut g = [0.0f64; 5];
        for (z, v) in &pts {
            let q: f64 = z.iter().zip(&z0).map(|(a, b)| (a - b) * (a - b)).sum();
            let denom = s * s + q;
            let res = v - const_term - (2.0 * s).ln() + denom.ln();
            let mut row = [0.0f64; 5];
            row[0] = 2.0 * s / denom - 1.0 / s;
            for a in 0..d {
                row[1 + a] = -2.0 * (z[a] - z0[a]) / denom;
            }
            for i in 0..k {
                g[i] += row[i] * res;
                for j in 0..k {
                    h[i][j] += row[i] * row[j];
                }
            }
        }
        let gnorm = g[..k].iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm <= 1e-14 * (1.0 + current_sse) {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..24 {
            let mut a = h;
            for i in 0..k {
                a[i][i] += mu * h[i][i].max(1e-300);
            }
            let mut rhs = [0.0f64; 5];
            for i in 0..k {
                rhs[i] = -g[i];
            }
            if let Some(delta) = solve_dense(&mut a, &mut rhs, k) {
                let s_try = s + delta[0];
                let z_try: Vec<f64> = (0..d).map(|a| z0[a] + delta[1 + a]).collect();
                if s_try > 0.0 {
                    let (sse_try, _) = sse(s_try, &z_try);
                    if sse_try <= current_sse {
                        let step_norm =
                            delta[..k].iter().map(|x| x * x).sum::<f64>().sqrt();
                        let scale_norm =
                            1.0 + s.abs() + z0.iter().map(|x| x * x).sum::<f64>().sqrt();
                        s = s_try;
                        z0 = z_try;
                        current_sse = sse_try;
                        mu = (mu / 3.0).max(1e-12);
                        improved = true;
                        if step_norm <= 1e-13 * scale_norm {
                            converged = true;
                        }
                        break;
                    }
                }
            }
            mu *= 4.0;
            if mu > 1e14 {
                break;
            }
        }
        if converged {
            break;
        }
        if !improved {
            // damping exhausted without progress; either done or diverged
            converged = gnorm <= 1e-8 * (1.0 + current_sse);
            break;
        }
    }

    let (final_sse, linf) = sse(s, &z0);
    if !converged {
        return Ok(BubbleFit {
            s,
            z0,
            linf_residual: f64::INFINITY,
            rms_residual: f64::INFINITY,
            r_fit,
            iterations,
            converged: false,
        });
    }
    Ok(BubbleFit {
        s,
        z0,
        linf_residual: linf,
        rms_residual: (final_sse / pts.len() as f64).sqrt(),
        r_fit,
        iterations,
        converged: true,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct FlatnessPoint {
    pub lambda: f64,
    /// r_sel^l / lambda.
    pub radius_ratio: f64,
    /// dist(center, nearest declared max of f0)^l / lambda.
    pub dist_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct FlatnessReport {
    pub points: Vec<FlatnessPoint>,
    pub max_radius_ratio: f64,
    pub max_dist_ratio: f64,
    /// Both ratio sequences non-increasing (10% slack) over the last 3.
    pub tail_nonincreasing: bool,
    pub pass: bool,
}

/// The l-type flatness bounds r^l <= C lambda and dist(x, P)^l <= C lambda,
/// read off a trace whose records carry bubble summaries: ratios must stay
/// bounded, with no upward trend over the last three records.
pub fn flatness_diagnostics(
    trace: &crate::continuation::ContinuationTrace,
    profile: &crate::analytic::Profile,
) -> Result<FlatnessReport> {
    let dim = profile.f0.grid().dim() as usize;
    let l = profile.l as i32;
    let mut points = Vec::new();
    for rec in trace.records.iter().filter(|r| r.converged) {
        let Some(b) = &rec.bubble else { continue };
        let mut dist = profile
            .f0
            .grid()
            .periodic_dist(&b.center[..dim], &profile.center[..dim]);
        if let Some(sec) = &profile.secondary {
            dist = dist.min(profile.f0.grid().periodic_dist(&b.center[..dim], &sec[..dim]));
        }
        points.push(FlatnessPoint {
            lambda: rec.lambda,
            radius_ratio: b.r_sel.powi(l) / rec.lambda,
            dist_ratio: dist.powi(l) / rec.lambda,
        });
    }
    if points.len() < 3 {
        return Err(QcrvError::InsufficientData(format!(
            "flatness diagnostics need 3 records with bubble summaries, have {}",
            points.len()
        )));
    }
    let max_radius_ratio = points.iter().map(|p| p.radius_ratio).fold(0.0f64, f64::max);
    let max_dist_ratio = points.iter().map(|p| p.dist_ratio).fold(0.0f64, f64::max);
    let tail = &points[points.len() - 3..];
    let nonincreasing = |take: fn(&FlatnessPoint) -> f64| {
        tail.windows(2).all(|w| take(&w[1]) <= take(&w[0]) * (1.0 + FLATNESS_SLACK))
    };
    let tail_nonincreasing =
        nonincreasing(|p| p.radius_ratio) && nonincreasing(|p| p.dist_ratio);
    Ok(FlatnessReport {
        points,
        max_radius_ratio,
        max_dist_ratio,
        tail_nonincreasing,
        pass: tail_nonincreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::standard_bubble;
    use crate::constraints::normalize_volume;
    use crate::continuation::{BubbleSummary, ContinuationTrace, TraceRecord};
    use rand::{Rng, SeedableRng};

    /// Uniform mass-1/8 disk radius on the flat 2-torus.
    const UNIFORM_RADIUS: f64 = 0.19947114020071635;

    #[test]
    fn uniform_density_radius_matches_the_disk_area() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let u = ScalarField::zeros(grid);
        let sel = select_radius(&u, CONCENTRATION_MASS).unwrap();
        assert!(
            (sel.radius - UNIFORM_RADIUS).abs() <= 1e-3,
            "r = {:.8}, expected {:.8}",
            sel.radius,
            UNIFORM_RADIUS
        );
        assert!((sel.achieved_mass - 0.125).abs() <= 1e-6);
        assert!(!sel.cluster_warning || sel.radius > 0.0);
    }

    #[test]
    fn uniform_density_in_4d_needs_too_large_a_ball() {
        // mass-1/8 ball radius (1/(4 pi^2))^(1/4) = 0.3989 exceeds 1/4
        let grid = TorusGrid::new(4, 8).unwrap();
        let u = ScalarField::zeros(grid);
        assert!(matches!(
            select_radius(&u, CONCENTRATION_MASS),
            Err(QcrvError::NoConcentration(_))
        ));
    }

    #[test]
    fn select_radius_rejects_bad_inputs() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let u = ScalarField::zeros(grid);
        assert!(select_radius(&u, 0.6).is_err());
        let not_normalized = ScalarField::constant(grid, 1.0).unwrap();
        assert!(select_radius(&not_normalized, 0.125).is_err());
    }

    fn transplant_bubble(grid: TorusGrid, sigma: f64, x0: &[f64]) -> ScalarField {
        let dim = grid.dim() as usize;
        let raw = ScalarField::from_fn(grid, |x| {
            let d2 = grid.periodic_dist2(&x[..dim], x0);
            (2.0 * sigma / (sigma * sigma + d2)).ln()
        })
        .unwrap();
        normalize_volume(&raw).unwrap()
    }

    #[test]
    fn transplanted_bubble_center_and_radius() {
        let grid = TorusGrid::new(2, 128).unwrap();
        let sigma = 0.05;
        let x0 = [0.25, 0.5];
        let u = transplant_bubble(grid, sigma, &x0);
        let sel = select_radius(&u, CONCENTRATION_MASS).unwrap();
        assert!((sel.center[0] - 0.25).abs() <= 1e-12);
        assert!((sel.center[1] - 0.5).abs() <= 1e-12);
        // continuum mass-1/8 radius of this density is sigma/sqrt(7); the
        // torus tail shifts it slightly
        let expect = sigma / 7.0f64.sqrt();
        assert!(
            (sel.radius - expect).abs() <= grid.spacing(),
            "r = {:.6}, continuum {:.6}",
            sel.radius,
            expect
        );
        assert!(!sel.cluster_warning);
    }

    #[test]
    fn selection_is_translation_covariant() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let u = transplant_bubble(grid, 0.06, &[0.25, 0.25]);
        let sel = select_radius(&u, 0.125).unwrap();

        // cyclic shift by (1/4, 1/2): relabeling grid points
        let n = 64usize;
        let mut shifted = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                shifted[((i + 16) % n) * n + (j + 32) % n] = u.values()[i * n + j];
            }
        }
        let us = ScalarField::from_values(grid, shifted).unwrap();
        let sel2 = select_radius(&us, 0.125).unwrap();
        assert!((sel2.center[0] - (sel.center[0] + 0.25)).abs() <= 1e-12);
        assert!((sel2.center[1] - (sel.center[1] + 0.5).rem_euclid(1.0)).abs() <= 1e-12);
        assert!((sel2.radius - sel.radius).abs() <= 1e-9);
    }

    #[test]
    fn two_clusters_raise_the_warning() {
        let grid = TorusGrid::new(2, 128).unwrap();
        let sigma = 0.03;
        let raw = ScalarField::from_fn(grid, |x| {
            let d1 = grid.periodic_dist2(&x[..2], &[0.2, 0.2]);
            let d2 = grid.periodic_dist2(&x[..2], &[0.7, 0.7]);
            let b1 = (2.0 * sigma / (sigma * sigma + d1)).powi(2);
            let b2 = (2.0 * sigma / (sigma * sigma + d2)).powi(2);
            0.5 * (b1 + b2).ln()
        })
        .unwrap();
        let u = normalize_volume(&raw).unwrap();
        let sel = select_radius(&u, 0.125).unwrap();
        assert!(sel.cluster_warning, "selection: {sel:?}");
    }

    #[test]
    fn spline_reproduces_node_values_and_smooth_fields() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let u = ScalarField::from_fn(grid, |x| (tau * x[0]).cos() * (tau * x[1]).sin()).unwrap();
        let sp = SplineInterpolant::new(&u);
        // cardinal property at nodes
        for &flat in &[0usize, 5, 33, 64 + 7, 1023] {
            let x = grid.coords(flat);
            assert!((sp.eval(&x[..2]) - u.values()[flat]).abs() <= 1e-12);
        }
        // O(h^4) accuracy off the grid
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let exact = (tau * x[0]).cos() * (tau * x[1]).sin();
            assert!((sp.eval(&x) - exact).abs() <= 1e-4);
        }
    }

    #[test]
    fn rescale_with_unit_radius_reads_off_grid_values() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let u = ScalarField::from_fn(grid, |x| 0.3 * (tau * x[0]).cos() + 0.1 * (tau * x[1]).sin())
            .unwrap();
        let sel = ConcentrationSelection {
            center: vec![0.0, 0.0],
            center_index: 0,
            radius: 1.0,
            achieved_mass: 0.125,
            rounds: 0,
            cluster_warning: false,
        };
        // midpoint lattice of [-1/4, 1/4] with m=16 lands on odd multiples
        // of 1/64: exact grid nodes, so u_hat = u + log 1 there
        let p = rescale(&u, &sel, 0.25, 16).unwrap();
        for flat in 0..p.values().len() {
            let z = p.coords(flat);
            let x = [z[0].rem_euclid(1.0), z[1].rem_euclid(1.0)];
            let gi = grid.flat_index(&[
                (x[0] * 64.0).round() as i64,
                (x[1] * 64.0).round() as i64,
            ]);
            assert!(
                (p.values()[flat] - u.values()[gi]).abs() <= 1e-11,
                "flat {flat}: {} vs {}",
                p.values()[flat],
                u.values()[gi]
            );
        }
    }

    #[test]
    fn rescale_rejects_oversized_windows() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let u = ScalarField::zeros(grid);
        let sel = ConcentrationSelection {
            center: vec![0.0, 0.0],
            center_index: 0,
            radius: 0.2,
            achieved_mass: 0.125,
            rounds: 0,
            cluster_warning: false,
        };
        assert!(matches!(
            rescale(&u, &sel, 2.0, 16),
            Err(QcrvError::WindowExceedsChart(_))
        ));
    }

    #[test]
    fn rescaled_transplant_matches_the_analytic_bubble() {
        let grid = TorusGrid::new(2, 256).unwrap();
        let sigma = 0.04;
        let x0 = [0.5, 0.5];
        let u = transplant_bubble(grid, sigma, &x0);
        let sel = select_radius(&u, 0.125).unwrap();
        let p = rescale(&u, &sel, 6.0, 64).unwrap();
        assert!(p.density_mismatch() <= 0.02);

        // the transplant is the standard bubble of width sigma up to the
        // torus normalization shift, so the rescaled window should fit a
        // standard bubble with s = sigma / r and a near-zero center
        let fit = fit_standard_bubble(&p).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.s - sigma / sel.radius).abs() <= 0.02 * (sigma / sel.radius),
            "s = {:.6}, expected {:.6}",
            fit.s,
            sigma / sel.radius
        );
        assert!(fit.z0.iter().all(|c| c.abs() <= 0.05));
    }

    fn exact_profile(dim: u32, window: f64, m: usize, s: f64, z0: &[f64]) -> RescaledProfile {
        let count = m.pow(dim);
        let mut values = vec![0.0; count];
        let proto = RescaledProfile::synthetic(dim, window, m, values.clone()).unwrap();
        for (flat, value) in values.iter_mut().enumerate() {
            let z = proto.coords(flat);
            *value = standard_bubble(dim, s, z0, &z).unwrap();
        }
        RescaledProfile::synthetic(dim, window, m, values).unwrap()
    }

    #[test]
    fn fit_recovers_exact_bubbles() {
        let p = exact_profile(2, 8.0, 48, 1.0, &[0.0, 0.0]);
        let fit = fit_standard_bubble(&p).unwrap();
        assert!(fit.converged);
        assert!((fit.s - 1.0).abs() <= 1e-8, "s = {:.12}", fit.s);
        assert!(fit.z0[0].abs() <= 1e-8 && fit.z0[1].abs() <= 1e-8);
        assert!(fit.linf_residual <= 1e-8);

        let p = exact_profile(2, 8.0, 48, 2.5, &[0.3, -0.1]);
        let fit = fit_standard_bubble(&p).unwrap();
        assert!((fit.s - 2.5).abs() <= 1e-6);
        assert!((fit.z0[0] - 0.3).abs() <= 1e-6 && (fit.z0[1] + 0.1).abs() <= 1e-6);
    }

    #[test]
    fn fit_tolerates_noise_at_the_noise_level() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let clean = exact_profile(2, 8.0, 48, 1.4, &[0.2, 0.1]);
        let noisy: Vec<f64> = clean
            .values()
            .iter()
            .map(|v| v + 0.01 * rng.gen_range(-1.0..1.0))
            .collect();
        let p = RescaledProfile::synthetic(2, 8.0, 48, noisy).unwrap();
        let fit = fit_standard_bubble(&p).unwrap();
        assert!(fit.converged);
        assert!((fit.s - 1.4).abs() <= 1e-2);
        assert!((fit.z0[0] - 0.2).abs() <= 1e-2 && (fit.z0[1] - 0.1).abs() <= 1e-2);
        assert!(fit.linf_residual <= 0.05);
        assert!(fit.rms_residual <= 0.02);
    }

    fn flat_trace(lambdas: &[f64], radius: impl Fn(f64) -> f64) -> ContinuationTrace {
        ContinuationTrace {
            records: lambdas
                .iter()
                .map(|&l| TraceRecord {
                    lambda: l,
                    beta: (1.0 / l).ln(),
                    alpha: 1.0 / l,
                    lambda_alpha: 1.0,
                    el_residual: 1e-8,
                    iterations: 1,
                    converged: true,
                    constraint_pass: true,
                    bubble: Some(BubbleSummary {
                        r_sel: radius(l),
                        center: vec![0.0, 0.0],
                        s: 1.0,
                        z0: vec![0.0, 0.0],
                        fit_linf: 0.01,
                    }),
                })
                .collect(),
        }
    }

    #[test]
    fn flatness_trend_verdicts() {
        let grid = TorusGrid::new(2, 32).unwrap();
        let profile = crate::analytic::make_profile(grid, 2, 1.0, &[0.0, 0.0], None).unwrap();
        let lams = [0.01, 0.005, 0.0025, 0.00125];

        // r = lambda^(1/l): ratio identically 1
        let t = flat_trace(&lams, |l| l.sqrt());
        let rep = flatness_diagnostics(&t, &profile).unwrap();
        assert!(rep.pass, "{rep:?}");
        for p in &rep.points {
            assert!((p.radius_ratio - 1.0).abs() <= 1e-12);
        }

        // r = lambda^(1/(2l)): ratio lambda^(-1/2) grows as lambda drops
        let t = flat_trace(&lams, |l| l.powf(0.25));
        let rep = flatness_diagnostics(&t, &profile).unwrap();
        assert!(!rep.pass);

        // too few records
        let t = flat_trace(&lams[..2], |l| l.sqrt());
        assert!(matches!(
            flatness_diagnostics(&t, &profile),
            Err(QcrvError::InsufficientData(_))
        ));
    }
}
