//! Cached multidimensional FFT plans and the polyharmonic symbol table.
//!
//! Fields are row-major with the last axis contiguous. Axis transforms walk
//! disjoint blocks, so parallel execution cannot reorder any floating-point
//! operation; results are bit-identical for any thread count.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::TorusGrid;

pub(crate) struct EnginePlans {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// m(k) = |2*pi*k|^n per flat spectral index, laid out like field values;
    /// k ranges over {-N/2, ..., N/2-1} per axis (Nyquist retained).
    pub symbol: Vec<f64>,
}

/// Integer frequency of spectral bin `i` on an axis of length `n`.
#[inline]
pub(crate) fn bin_frequency(i: u32, n: u32) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// m(k) = |2*pi*k|^n for integer frequency vector k.
pub(crate) fn symbol_value(dim: u32, k_sq_sum: i64) -> f64 {
    let base = 4.0 * std::f64::consts::PI * std::f64::consts::PI * k_sq_sum as f64;
    match dim {
        2 => base,
        4 => base * base,
        _ => unreachable!("grid construction rejects other dimensions"),
    }
}

fn build_symbol(grid: TorusGrid) -> Vec<f64> {
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let mut symbol = vec![0.0; grid.point_count()];
    for (flat, s) in symbol.iter_mut().enumerate() {
        let mi = grid.multi_index(flat);
        let mut k_sq = 0i64;
        for axis in 0..dim as usize {
            let k = bin_frequency(mi[axis], n);
            k_sq += k * k;
        }
        *s = symbol_value(dim, k_sq);
    }
    symbol
}

impl EnginePlans {
    fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft(grid.points_per_axis() as usize, FftDirection::Forward);
        let inv = planner.plan_fft(grid.points_per_axis() as usize, FftDirection::Inverse);
        EnginePlans { grid, fwd, inv, symbol: build_symbol(grid) }
    }

    /// Unnormalized forward DFT of a real field.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> =
            values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        for axis in 0..self.grid.dim() {
            self.transform_axis(&mut buf, axis as usize, &self.fwd);
        }
        buf
    }

    /// Unnormalized inverse DFT; divides by N^n and keeps the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex<f64>>) -> Vec<f64> {
        for axis in 0..self.grid.dim() {
            self.transform_axis(&mut spec, axis as usize, &self.inv);
        }
        let scale = 1.0 / self.grid.point_count() as f64;
        spec.iter().map(|c| c.re * scale).collect()
    }

    fn transform_axis(&self, buf: &mut [Complex<f64>], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis() as usize;
        let dim = self.grid.dim() as usize;
        let inner: usize = n.pow((dim - 1 - axis) as u32);
        let block = n * inner;

        let run_block = |chunk: &mut [Complex<f64>]| {
            let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            if inner == 1 {
                fft.process_with_scratch(chunk, &mut scratch);
            } else {
                let mut line = vec![Complex::new(0.0, 0.0); n];
                for i in 0..inner {
                    for j in 0..n {
                        line[j] = chunk[i + j * inner];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for j in 0..n {
                        chunk[i + j * inner] = line[j];
                    }
                }
            }
        };

        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            buf.par_chunks_mut(block).for_each(run_block);
        }
        #[cfg(not(feature = "parallel"))]
        {
            buf.chunks_mut(block).for_each(run_block);
        }
    }
}

static ENGINES: OnceLock<Mutex<HashMap<(u32, u32), Arc<EnginePlans>>>> = OnceLock::new();

/// Shared engine for a grid shape; plans and symbol tables are built once.
pub(crate) fn engine(grid: TorusGrid) -> Arc<EnginePlans> {
    let map = ENGINES.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (grid.dim(), grid.points_per_axis());
    let mut guard = map.lock().expect("engine cache poisoned");
    guard.entry(key).or_insert_with(|| Arc::new(EnginePlans::new(grid))).clone()
}
