//! Uniform periodic grids on the unit-volume flat torus [0,1)^n and the
//! scalar fields sampled on them.

use crate::error::{QcrvError, Result};
use crate::par;

/// Largest dimension the crate supports; coordinate buffers are fixed-size.
pub const MAX_DIM: usize = 4;

/// Uniform N^n grid on [0,1)^n with spacing h = 1/N.
///
/// N is a power of two and at least 8 so that h^n and N^n * h^n = 1 are exact
/// in binary floating point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    dim: u32,
    points_per_axis: u32,
}

impl TorusGrid {
    pub fn new(dim: u32, points_per_axis: u32) -> Result<Self> {
        if dim != 2 && dim != 4 {
            return Err(QcrvError::UnsupportedDimension(dim));
        }
        let n = points_per_axis;
        if n < 8 || !n.is_power_of_two() {
            return Err(QcrvError::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        let total = (n as u128).pow(dim);
        if total > (1u128 << 31) {
            return Err(QcrvError::InvalidGrid(format!(
                "grid of {n}^{dim} points exceeds the supported size"
            )));
        }
        Ok(TorusGrid { dim, points_per_axis: n })
    }

    #[inline]
    pub fn dim(&self) -> u32 {
        self.dim
    }

    #[inline]
    pub fn points_per_axis(&self) -> u32 {
        self.points_per_axis
    }

    /// Grid spacing h = 1/N.
    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_axis as f64
    }

    /// Quadrature weight of one cell, h^n. The trapezoidal rule on a periodic
    /// uniform grid is exactly this weight on every node.
    #[inline]
    pub fn cell_measure(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of grid points N^n.
    #[inline]
    pub fn point_count(&self) -> usize {
        (self.points_per_axis as usize).pow(self.dim)
    }

    /// Decode a flat row-major index (last axis fastest) into per-axis indices.
    #[inline]
    pub fn multi_index(&self, flat: usize) -> [u32; MAX_DIM] {
        let n = self.points_per_axis as usize;
        let mut out = [0u32; MAX_DIM];
        let mut rest = flat;
        for axis in (0..self.dim as usize).rev() {
            out[axis] = (rest % n) as u32;
            rest /= n;
        }
        out
    }

    /// Flat index of per-axis indices (wrapped into range).
    #[inline]
    pub fn flat_index(&self, multi: &[i64]) -> usize {
        let n = self.points_per_axis as i64;
        let mut flat = 0usize;
        for axis in 0..self.dim as usize {
            let w = multi[axis].rem_euclid(n) as usize;
            flat = flat * n as usize + w;
        }
        flat
    }

    /// Coordinates of a grid point; entries beyond `dim` are zero.
    #[inline]
    pub fn coords(&self, flat: usize) -> [f64; MAX_DIM] {
        let h = self.spacing();
        let mi = self.multi_index(flat);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim as usize {
            x[axis] = mi[axis] as f64 * h;
        }
        x
    }

    /// Squared geodesic (periodic) distance between two points of [0,1)^n.
    pub fn periodic_dist2(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for axis in 0..self.dim as usize {
            let d = periodic_delta(a[axis] - b[axis]);
            acc += d * d;
        }
        acc
    }

    pub fn periodic_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        self.periodic_dist2(a, b).sqrt()
    }
}

/// Wrap a coordinate difference into [-1/2, 1/2).
#[inline]
pub fn periodic_delta(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

/// Wrap a coordinate into [0, 1).
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    x - x.floor()
}

/// Real scalar field sampled on a [`TorusGrid`], row-major, all values finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        ScalarField { grid, values: vec![0.0; grid.point_count()] }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(QcrvError::NonFinite { context: "constant field", index: 0 });
        }
        Ok(ScalarField { grid, values: vec![c; grid.point_count()] })
    }

    /// Wrap a value vector; rejects wrong length and non-finite entries.
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.point_count() {
            return Err(QcrvError::InvalidGrid(format!(
                "value vector has length {}, grid has {} points",
                values.len(),
                grid.point_count()
            )));
        }
        validate_finite(&values, "field values")?;
        Ok(ScalarField { grid, values })
    }

    /// Sample a function of torus coordinates on the grid.
    pub fn from_fn<F>(grid: TorusGrid, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let mut values = vec![0.0; grid.point_count()];
        par::fill_with(&mut values, |i| {
            let x = grid.coords(i);
            f(&x[..grid.dim() as usize])
        });
        validate_finite(&values, "sampled field")?;
        Ok(ScalarField { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        par::sum(&self.values) / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        par::max(&self.values)
    }

    /// Maximum value and its grid point; ties take the smallest flat index.
    pub fn argmax(&self) -> (f64, usize) {
        let m = par::max_with_index(&self.values);
        (m.value, m.index)
    }

    pub fn max_abs(&self) -> f64 {
        par::max_abs(&self.values)
    }

    /// Map into a new field with the same grid.
    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let mut values = vec![0.0; self.values.len()];
        par::fill_with(&mut values, |i| f(self.values[i]));
        ScalarField { grid: self.grid, values }
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn scale(&self, t: f64) -> Self {
        self.map(|v| t * v)
    }
}

fn validate_finite(values: &[f64], context: &'static str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(QcrvError::NonFinite { context, index: i });
        }
    }
    Ok(())
}
