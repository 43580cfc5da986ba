//! The polyharmonic operator P = (-Delta)^(n/2) on the unit flat torus, its
//! quadratic energy, and measure-weighted integrals.
//!
//! P acts diagonally in Fourier space with multiplier m(k) = |2*pi*k|^n over
//! integer frequencies k in {-N/2, ..., N/2-1}^n (Nyquist retained, m(0) = 0,
//! so constants are annihilated and outputs have mean zero).

use rustfft::num_complex::Complex;

use crate::error::{QcrvError, Result};
use crate::fft;
use crate::grid::ScalarField;
use crate::par;

/// The Fourier multiplier m(k) = |2*pi*k|^n of P on the n-torus.
#[derive(Clone, Copy, Debug)]
pub struct GjmsMultiplier {
    dim: u32,
}

impl GjmsMultiplier {
    pub fn new(dim: u32) -> Result<Self> {
        if dim != 2 && dim != 4 {
            return Err(QcrvError::UnsupportedDimension(dim));
        }
        Ok(GjmsMultiplier { dim })
    }

    #[inline]
    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// m(k) for an integer frequency vector (length = dim).
    pub fn value(&self, k: &[i64]) -> f64 {
        let k_sq: i64 = k.iter().take(self.dim as usize).map(|&c| c * c).sum();
        fft::symbol_value(self.dim, k_sq)
    }
}

/// P u via FFT diagonalization. Output mean is zero up to rounding.
pub fn apply_gjms(u: &ScalarField) -> Result<ScalarField> {
    let grid = u.grid();
    let eng = fft::engine(grid);
    let mut spec = eng.forward(u.values());
    for (c, &m) in spec.iter_mut().zip(eng.symbol.iter()) {
        *c *= m;
    }
    let out = eng.inverse_real(spec);
    ScalarField::from_values(grid, out)
}

/// P u by direct O(N^(2n)) summation with an integer twiddle table.
///
/// Independent oracle for [`apply_gjms`]: no FFT machinery is shared except
/// the symbol definition. Guarded to N <= 16; the cost at the guard boundary
/// is billions of operations, so tests should stay well below it.
pub fn apply_gjms_dense(u: &ScalarField) -> Result<ScalarField> {
    let grid = u.grid();
    let n_axis = grid.points_per_axis();
    if n_axis > 16 {
        return Err(QcrvError::DenseGuard { n_axis });
    }
    let dim = grid.dim() as usize;
    let count = grid.point_count();
    let n = n_axis as i64;

    // Integer index vectors for every flat position, reused for k and j.
    let indices: Vec<[i64; 4]> = (0..count)
        .map(|flat| {
            let mi = grid.multi_index(flat);
            let mut v = [0i64; 4];
            for a in 0..dim {
                v[a] = mi[a] as i64;
            }
            v
        })
        .collect();
    let freqs: Vec<[i64; 4]> = (0..count)
        .map(|flat| {
            let mi = grid.multi_index(flat);
            let mut v = [0i64; 4];
            for a in 0..dim {
                v[a] = fft::bin_frequency(mi[a], n_axis);
            }
            v
        })
        .collect();
    let twiddle: Vec<Complex<f64>> = (0..n_axis)
        .map(|m| {
            let phase = 2.0 * std::f64::consts::PI * m as f64 / n_axis as f64;
            Complex::new(phase.cos(), phase.sin())
        })
        .collect();
    let phase_index = |k: &[i64; 4], j: &[i64; 4]| -> usize {
        let mut acc = 0i64;
        for a in 0..dim {
            acc += k[a] * j[a];
        }
        acc.rem_euclid(n) as usize
    };

    let mul = GjmsMultiplier::new(grid.dim())?;
    let values = u.values();

    // Forward coefficients, weighted by the multiplier.
    let mut weighted = vec![Complex::new(0.0, 0.0); count];
    for (k_flat, wk) in weighted.iter_mut().enumerate() {
        let kv = &freqs[k_flat];
        let m = mul.value(&kv[..dim]);
        if m == 0.0 {
            continue;
        }
        let mut acc = Complex::new(0.0, 0.0);
        for (j_flat, jv) in indices.iter().enumerate() {
            acc += twiddle[phase_index(kv, jv)].conj() * values[j_flat];
        }
        *wk = acc * m;
    }

    // Inverse transform back to grid values.
    let scale = 1.0 / count as f64;
    let mut out = vec![0.0; count];
    for (j_flat, o) in out.iter_mut().enumerate() {
        let jv = &indices[j_flat];
        let mut acc = Complex::new(0.0, 0.0);
        for (k_flat, wk) in weighted.iter().enumerate() {
            if wk.re != 0.0 || wk.im != 0.0 {
                acc += twiddle[phase_index(&freqs[k_flat], jv)] * wk;
            }
        }
        *o = acc.re * scale;
    }
    ScalarField::from_values(grid, out)
}

/// Integral over the torus: sum of values times the cell measure.
pub fn integral(w: &ScalarField) -> f64 {
    par::sum(w.values()) * w.grid().cell_measure()
}

/// L2(d mu) inner product of two fields on the same grid.
pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    check_same_grid(a, b)?;
    Ok(par::dot(a.values(), b.values()) * a.grid().cell_measure())
}

/// L2(d mu) norm.
pub fn norm_l2(a: &ScalarField) -> f64 {
    (par::dot(a.values(), a.values()) * a.grid().cell_measure()).sqrt()
}

/// E(u) = integral of u * (P u); nonnegative, zero exactly on constants.
pub fn energy(u: &ScalarField) -> Result<f64> {
    let pu = apply_gjms(u)?;
    inner(u, &pu)
}

/// E(u) evaluated in Fourier space (Parseval form); cross-check for
/// [`energy`], also cheaper by one transform.
pub fn energy_parseval(u: &ScalarField) -> Result<f64> {
    let grid = u.grid();
    let eng = fft::engine(grid);
    let spec = eng.forward(u.values());
    let count = grid.point_count() as f64;
    let total = par::sum_map(spec.len(), |i| eng.symbol[i] * spec[i].norm_sqr());
    Ok(total / (count * count))
}

/// Gradient of E at u in L2(d mu): 2 P u.
pub fn energy_gradient(u: &ScalarField) -> Result<ScalarField> {
    let pu = apply_gjms(u)?;
    Ok(pu.scale(2.0))
}

/// Integral of f * exp(n_exp * u) d mu, max-shift stabilized when the
/// exponent exceeds 500. Errors if the result overflows f64 despite shifting.
pub fn weighted_exp_integral(f: &ScalarField, u: &ScalarField, n_exp: u32) -> Result<f64> {
    check_same_grid(f, u)?;
    if n_exp == 0 || n_exp % 2 != 0 {
        return Err(QcrvError::InvalidParameter {
            name: "n_exp",
            message: format!("conformal exponent must be even and positive, got {n_exp}"),
        });
    }
    let ne = n_exp as f64;
    let fv = f.values();
    let uv = u.values();
    let cell = f.grid().cell_measure();
    let shift = ne * u.max();
    if shift <= 500.0 {
        Ok(par::sum_map(fv.len(), |i| fv[i] * (ne * uv[i]).exp()) * cell)
    } else {
        let s = par::sum_map(fv.len(), |i| fv[i] * (ne * uv[i] - shift).exp()) * cell;
        if s == 0.0 {
            return Ok(0.0);
        }
        let log_magnitude = s.abs().ln() + shift;
        if log_magnitude > 709.0 {
            return Err(QcrvError::Overflow { shift, log_magnitude });
        }
        Ok(s.signum() * log_magnitude.exp())
    }
}

/// log of integral exp(n_exp * u) d mu, evaluated in shifted form; never
/// overflows for finite fields.
pub fn log_exp_integral(u: &ScalarField, n_exp: u32) -> f64 {
    let ne = n_exp as f64;
    let uv = u.values();
    let shift = ne * u.max();
    let s = par::sum_map(uv.len(), |i| (ne * uv[i] - shift).exp());
    shift + (s * u.grid().cell_measure()).ln()
}

pub(crate) fn check_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(QcrvError::GridMismatch(format!(
            "fields live on different grids: {:?} vs {:?}",
            a.grid(),
            b.grid()
        )));
    }
    Ok(())
}
