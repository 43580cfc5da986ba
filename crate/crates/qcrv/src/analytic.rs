//! Closed-form reference quantities and analytic building blocks: sphere
//! areas, the concentration constant, the standard bubble profile and its
//! PDE, the capped log-type test function, and the zero-set profile factory.

use crate::error::{QcrvError, Result};
use crate::grid::{wrap_unit, ScalarField, TorusGrid};
use crate::spectral::integral;

pub const PI: f64 = std::f64::consts::PI;

/// Surface area of the unit n-sphere in R^(n+1), n = 1..4.
pub fn sphere_area(n: u32) -> Result<f64> {
    match n {
        1 => Ok(2.0 * PI),
        2 => Ok(4.0 * PI),
        3 => Ok(2.0 * PI * PI),
        4 => Ok(8.0 * PI * PI / 3.0),
        _ => Err(QcrvError::InvalidParameter {
            name: "n",
            message: format!("sphere area implemented for n in 1..=4, got {n}"),
        }),
    }
}

/// The concentration constant c_n = (n-1)! * |S^n| together with |S^n|.
///
/// c_2 = 4*pi, c_4 = 16*pi^2.
#[derive(Clone, Copy, Debug)]
pub struct BubbleConstant {
    pub c_n: f64,
    pub sphere_area: f64,
}

pub fn bubble_constant(dim: u32) -> Result<BubbleConstant> {
    let area = sphere_area(dim)?;
    let factorial = match dim {
        2 => 1.0,
        4 => 6.0,
        _ => {
            return Err(QcrvError::UnsupportedDimension(dim));
        }
    };
    Ok(BubbleConstant { c_n: factorial * area, sphere_area: area })
}

/// The standard bubble in the flat chart:
/// (1/n) log(1/|S^n|) + log(2s / (s^2 + |z - z0|^2)).
///
/// Its density e^(n u) has unit mass over R^n and solves
/// (-Delta)^(n/2) u = (n-1)! e^(n u).
pub fn standard_bubble(dim: u32, s: f64, z0: &[f64], z: &[f64]) -> Result<f64> {
    if s <= 0.0 || !s.is_finite() {
        return Err(QcrvError::InvalidParameter {
            name: "s",
            message: format!("bubble scale must be positive and finite, got {s}"),
        });
    }
    let area = sphere_area(dim)?;
    let mut rho_sq = 0.0;
    for a in 0..dim as usize {
        let d = z[a] - z0[a];
        rho_sq += d * d;
    }
    Ok(-(area.ln()) / dim as f64 + (2.0 * s).ln() - (s * s + rho_sq).ln())
}

/// Mass of the bubble density inside |z| <= rho_max, by radial quadrature.
///
/// Independent of the grid machinery: composite Simpson on the substitution
/// rho = s tan(theta), where the integrand becomes
/// 2 |S^(n-1)|/|S^n| sin^(n-1)(2 theta). Converges to 1 as rho_max -> inf.
pub fn bubble_mass_radial(dim: u32, s: f64, rho_max: f64) -> Result<f64> {
    if s <= 0.0 || rho_max <= 0.0 {
        return Err(QcrvError::InvalidParameter {
            name: "s, rho_max",
            message: "bubble scale and radius must be positive".into(),
        });
    }
    let ratio = 2.0 * sphere_area(dim - 1)? / sphere_area(dim)?;
    let theta_max = (rho_max / s).atan();
    let g = |theta: f64| ratio * (2.0 * theta).sin().powi(dim as i32 - 1);
    // Composite Simpson, even panel count; the integrand is smooth and bounded.
    let panels = 4096;
    let h = theta_max / panels as f64;
    let mut acc = g(0.0) + g(theta_max);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(i as f64 * h);
    }
    Ok(acc * h / 3.0)
}

/// 4th-order centered second derivative.
fn d2_4th<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (-f(x - 2.0 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2.0 * h))
        / (12.0 * h * h)
}

/// 4th-order centered first derivative.
fn d1_4th<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// 4th-order centered third derivative.
fn d3_4th<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (f(x - 3.0 * h) - 8.0 * f(x - 2.0 * h) + 13.0 * f(x - h) - 13.0 * f(x + h)
        + 8.0 * f(x + 2.0 * h)
        - f(x + 3.0 * h))
        / (8.0 * h * h * h)
}

/// 4th-order centered fourth derivative.
fn d4_4th<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (-f(x - 3.0 * h) + 12.0 * f(x - 2.0 * h) - 39.0 * f(x - h) + 56.0 * f(x)
        - 39.0 * f(x + h)
        + 12.0 * f(x + 2.0 * h)
        - f(x + 3.0 * h))
        / (6.0 * h * h * h * h)
}

/// Verify that the standard bubble solves its semilinear PDE, by finite
/// differences on analytic samples. Returns the max pointwise residual.
///
/// n = 2: -Delta w = e^(2w) checked on a patch of [-2,2]^2 with a 4th-order
/// stencil at step 1e-3; expected residual <= 1e-6.
/// n = 4: Delta^2 w = 3! e^(4w) spot-checked radially through the closed-form
/// radial bilaplacian g'''' + 6 g'''/rho + 3 g''/rho^2 - 3 g'/rho^3; expected
/// residual <= 1e-4 at s ~ 1.
pub fn verify_bubble_pde(dim: u32, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Err(QcrvError::InvalidParameter {
            name: "s",
            message: "bubble scale must be positive".into(),
        });
    }
    match dim {
        2 => {
            let w = |z1: f64, z2: f64| (2.0 * s).ln() - (s * s + z1 * z1 + z2 * z2).ln();
            let h = 1e-3;
            let mut worst = 0.0f64;
            let samples = 9;
            for i in 0..samples {
                for j in 0..samples {
                    let z1 = -2.0 + 4.0 * i as f64 / (samples - 1) as f64;
                    let z2 = -2.0 + 4.0 * j as f64 / (samples - 1) as f64;
                    let lap = d2_4th(&|t| w(t, z2), z1, h) + d2_4th(&|t| w(z1, t), z2, h);
                    let res = (-lap - (2.0 * w(z1, z2)).exp()).abs();
                    worst = worst.max(res);
                }
            }
            Ok(worst)
        }
        4 => {
            // The bubble is radial about its center, so a 1-D check suffices.
            let w = |rho: f64| (2.0 * s).ln() - (s * s + rho * rho).ln();
            let h = 8e-3 * s;
            let mut worst = 0.0f64;
            for &rho in &[0.4 * s, 0.8 * s, 1.3 * s] {
                let bilap = d4_4th(&w, rho, h) + 6.0 * d3_4th(&w, rho, h) / rho
                    + 3.0 * d2_4th(&w, rho, h) / (rho * rho)
                    - 3.0 * d1_4th(&w, rho, h) / (rho * rho * rho);
                let res = (bilap - 6.0 * (4.0 * w(rho)).exp()).abs();
                worst = worst.max(res);
            }
            Ok(worst)
        }
        other => Err(QcrvError::UnsupportedDimension(other)),
    }
}

/// C^2 monotone radial cutoff: identity on [0, delta], constant 2*delta from
/// 2*delta on, quintic blend between. B(t) = t + 4t^3 - 7t^4 + 3t^5 matches
/// value/slope/curvature at both ends.
fn chi(delta: f64, t: f64) -> f64 {
    if t <= delta {
        t
    } else if t >= 2.0 * delta {
        2.0 * delta
    } else {
        let tau = (t - delta) / delta;
        let b = tau + 4.0 * tau.powi(3) - 7.0 * tau.powi(4) + 3.0 * tau.powi(5);
        delta * (1.0 + b)
    }
}

/// Log-type concentration seed: log(2s / (1 + s^2 chi(d(x, x0))^2)).
///
/// Equals log(2s) at x0, constant beyond distance 2*delta, and its energy
/// grows like 2 c_n log s as s -> inf.
pub fn make_test_function(
    grid: TorusGrid,
    x0: &[f64],
    s: f64,
    delta: f64,
) -> Result<ScalarField> {
    if s < 1.0 || !s.is_finite() {
        return Err(QcrvError::InvalidParameter {
            name: "s",
            message: format!("test-function scale must satisfy s >= 1, got {s}"),
        });
    }
    if delta <= 0.0 || delta > 0.1 {
        return Err(QcrvError::InvalidParameter {
            name: "delta",
            message: format!("cutoff radius must lie in (0, 0.1], got {delta}"),
        });
    }
    if x0.len() != grid.dim() as usize {
        return Err(QcrvError::InvalidParameter {
            name: "x0",
            message: format!("center has {} coordinates, grid dimension is {}", x0.len(), grid.dim()),
        });
    }
    let log_2s = (2.0 * s).ln();
    ScalarField::from_fn(grid, |x| {
        let d = grid.periodic_dist(x, x0);
        let c = chi(delta, d);
        log_2s - (1.0 + s * s * c * c).ln()
    })
}

/// A nonpositive profile with prescribed zero-set geometry, plus the metadata
/// the continuation and bubble diagnostics need.
#[derive(Clone, Debug)]
pub struct Profile {
    pub f0: ScalarField,
    /// Vanishing order l at the primary max point (even, >= 2).
    pub l: u32,
    pub amplitude: f64,
    /// Primary max point, snapped to the grid.
    pub center: Vec<f64>,
    /// Optional secondary quadratic max point, snapped to the grid.
    pub secondary: Option<Vec<f64>>,
    /// Admissible interval bound: lambda_max = -integral(f0) > 0.
    pub lambda_max: f64,
}

impl Profile {
    /// f_lambda = f0 + lambda.
    pub fn f_lambda(&self, lambda: f64) -> ScalarField {
        self.f0.add_scalar(lambda)
    }
}

/// Build f0(x) = -A (sum_i sin^2(pi (x_i - P_i)))^(l/2), optionally
/// multiplied by a quadratic well centered at a secondary point.
///
/// Near P: f0 = -A' pi^l |x - P|^l (1 + O(|x - P|^2)), so P is an l-type
/// maximum; the secondary point (if any) is quadratic type. Centers are
/// snapped to the nearest grid point so the zero is attained exactly.
pub fn make_profile(
    grid: TorusGrid,
    l: u32,
    amplitude: f64,
    center: &[f64],
    secondary: Option<&[f64]>,
) -> Result<Profile> {
    if l < 2 || l % 2 != 0 {
        return Err(QcrvError::InvalidParameter {
            name: "l",
            message: format!("vanishing order must be even and >= 2, got {l}"),
        });
    }
    if amplitude <= 0.0 || !amplitude.is_finite() {
        return Err(QcrvError::InvalidParameter {
            name: "amplitude",
            message: format!("amplitude must be positive, got {amplitude}"),
        });
    }
    let dim = grid.dim() as usize;
    if center.len() != dim {
        return Err(QcrvError::InvalidParameter {
            name: "center",
            message: format!("center has {} coordinates, grid dimension is {dim}", center.len()),
        });
    }
    let snap = |p: &[f64]| -> Vec<f64> {
        let n = grid.points_per_axis() as f64;
        p.iter().map(|&c| wrap_unit((c * n).round() / n)).collect()
    };
    let p = snap(center);
    let p2 = match secondary {
        Some(sec) => {
            if sec.len() != dim {
                return Err(QcrvError::InvalidParameter {
                    name: "secondary",
                    message: format!(
                        "secondary center has {} coordinates, grid dimension is {dim}",
                        sec.len()
                    ),
                });
            }
            Some(snap(sec))
        }
        None => None,
    };

    let sin_well = |x: &[f64], q: &[f64]| -> f64 {
        let mut acc = 0.0;
        for a in 0..dim {
            let s = (PI * (x[a] - q[a])).sin();
            acc += s * s;
        }
        acc
    };
    let half_l = (l / 2) as i32;
    let p_cl = p.clone();
    let p2_cl = p2.clone();
    let f0 = ScalarField::from_fn(grid, move |x| {
        let mut v = -amplitude * sin_well(x, &p_cl).powi(half_l);
        if let Some(ref q) = p2_cl {
            v *= sin_well(x, q);
        }
        v
    })?;
    let lambda_max = -integral(&f0);
    if lambda_max <= 0.0 {
        return Err(QcrvError::InvalidParameter {
            name: "profile",
            message: "profile integrates to zero; no admissible lambda interval".into(),
        });
    }
    Ok(Profile { f0, l, amplitude, center: p, secondary: p2, lambda_max })
}
