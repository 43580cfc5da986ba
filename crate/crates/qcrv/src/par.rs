//! Deterministic data-parallel kernels.
//!
//! Every reduction uses a fixed-shape pairwise tree: split at the midpoint,
//! sequential leaves of `LEAF` elements. The tree shape depends only on the
//! input length, never on thread count, so the parallel and sequential builds
//! produce bit-identical results. Elementwise maps write disjoint chunks and
//! are trivially reproducible.

/// Leaf size of the reduction tree. Fixed: changing it changes rounding.
pub const LEAF: usize = 4096;

#[cfg(feature = "parallel")]
#[inline]
fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
#[inline]
fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
{
    (a(), b())
}

/// Accumulator for the pairwise tree; implemented for the handful of shapes
/// the crate reduces into.
pub trait Accum: Send + Sized {
    fn combine(self, other: Self) -> Self;
}

impl Accum for f64 {
    #[inline]
    fn combine(self, other: Self) -> Self {
        self + other
    }
}

/// Component-wise pair of sums.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pair(pub f64, pub f64);

impl Accum for Pair {
    #[inline]
    fn combine(self, other: Self) -> Self {
        Pair(self.0 + other.0, self.1 + other.1)
    }
}

/// Running maximum with the flat index where it is attained.
/// Ties resolve to the smaller index, so the result is order-independent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaxAt {
    pub value: f64,
    pub index: usize,
}

impl Accum for MaxAt {
    #[inline]
    fn combine(self, other: Self) -> Self {
        if other.value > self.value || (other.value == self.value && other.index < self.index) {
            other
        } else {
            self
        }
    }
}

fn pairwise<T, F>(lo: usize, hi: usize, leaf: &F) -> T
where
    T: Accum,
    F: Fn(usize, usize) -> T + Sync,
{
    if hi - lo <= LEAF {
        leaf(lo, hi)
    } else {
        let mid = lo + (hi - lo) / 2;
        let (a, b) = join(|| pairwise(lo, mid, leaf), || pairwise(mid, hi, leaf));
        a.combine(b)
    }
}

fn pairwise_seq<T, F>(lo: usize, hi: usize, leaf: &F) -> T
where
    T: Accum,
    F: Fn(usize, usize) -> T,
{
    if hi - lo <= LEAF {
        leaf(lo, hi)
    } else {
        let mid = lo + (hi - lo) / 2;
        let a = pairwise_seq(lo, mid, leaf);
        let b = pairwise_seq(mid, hi, leaf);
        a.combine(b)
    }
}

/// Pairwise sum of `f(i)` over `0..len`.
pub fn sum_map<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if len == 0 {
        return 0.0;
    }
    pairwise(0, len, &|lo, hi| {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    })
}

/// Sequential twin of [`sum_map`]; same tree shape, same bits.
pub fn sum_map_seq<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    if len == 0 {
        return 0.0;
    }
    pairwise_seq(0, len, &|lo, hi| {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    })
}

/// Pairwise sum of a pair of maps in one traversal.
pub fn sum2_map<F>(len: usize, f: F) -> Pair
where
    F: Fn(usize) -> (f64, f64) + Sync,
{
    if len == 0 {
        return Pair(0.0, 0.0);
    }
    pairwise(0, len, &|lo, hi| {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in lo..hi {
            let (x, y) = f(i);
            a += x;
            b += y;
        }
        Pair(a, b)
    })
}

pub fn sum(xs: &[f64]) -> f64 {
    sum_map(xs.len(), |i| xs[i])
}

pub fn sum_seq(xs: &[f64]) -> f64 {
    sum_map_seq(xs.len(), |i| xs[i])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_map(a.len(), |i| a[i] * b[i])
}

pub fn dot_seq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_map_seq(a.len(), |i| a[i] * b[i])
}

pub fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), c.len());
    sum_map(a.len(), |i| a[i] * b[i] * c[i])
}

/// Maximum value and the smallest flat index attaining it.
pub fn max_with_index(xs: &[f64]) -> MaxAt {
    assert!(!xs.is_empty());
    pairwise(0, xs.len(), &|lo, hi| {
        let mut best = MaxAt { value: xs[lo], index: lo };
        for i in lo + 1..hi {
            if xs[i] > best.value {
                best = MaxAt { value: xs[i], index: i };
            }
        }
        best
    })
}

/// Sequential twin of [`max_with_index`].
pub fn max_with_index_seq(xs: &[f64]) -> MaxAt {
    assert!(!xs.is_empty());
    pairwise_seq(0, xs.len(), &|lo, hi| {
        let mut best = MaxAt { value: xs[lo], index: lo };
        for i in lo + 1..hi {
            if xs[i] > best.value {
                best = MaxAt { value: xs[i], index: i };
            }
        }
        best
    })
}

pub fn max(xs: &[f64]) -> f64 {
    max_with_index(xs).value
}

/// Maximum absolute value.
pub fn max_abs(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let MaxVal(m) = pairwise(0, xs.len(), &|lo, hi| {
        let mut best = 0.0f64;
        for i in lo..hi {
            let a = xs[i].abs();
            if a > best {
                best = a;
            }
        }
        MaxVal(best)
    });
    m
}

#[derive(Clone, Copy)]
struct MaxVal(f64);

impl Accum for MaxVal {
    #[inline]
    fn combine(self, other: Self) -> Self {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

/// Fill `dst[i] = f(i)` with disjoint parallel chunks.
pub fn fill_with<F>(dst: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        dst.par_chunks_mut(LEAF).enumerate().for_each(|(ci, chunk)| {
            let base = ci * LEAF;
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = f(base + j);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, v) in dst.iter_mut().enumerate() {
            *v = f(i);
        }
    }
}

/// Sequential twin of [`fill_with`].
pub fn fill_with_seq<F>(dst: &mut [f64], f: F)
where
    F: Fn(usize) -> f64,
{
    for (i, v) in dst.iter_mut().enumerate() {
        *v = f(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_reductions_agree_bitwise() {
        let xs: Vec<f64> = (0..100_000)
            .map(|i| ((i as f64) * 0.7391).sin() * 1e3 + 1e-7 * i as f64)
            .collect();
        let ys: Vec<f64> = (0..100_000).map(|i| ((i as f64) * 0.1173).cos()).collect();
        assert_eq!(sum(&xs).to_bits(), sum_seq(&xs).to_bits());
        assert_eq!(dot(&xs, &ys).to_bits(), dot_seq(&xs, &ys).to_bits());
        assert_eq!(max_with_index(&xs), max_with_index_seq(&xs));
    }

    #[test]
    fn pairwise_sum_is_accurate_on_adversarial_input() {
        // 1 followed by many tiny values that a naive left fold would drop.
        let mut xs = vec![1.0f64];
        xs.extend(std::iter::repeat(1e-16).take(1 << 20));
        let s = sum(&xs);
        let expected = 1.0 + 1e-16 * (1u64 << 20) as f64;
        assert!((s - expected).abs() < 1e-12, "s = {s:.17e}");
    }

    #[test]
    fn max_ties_resolve_to_smallest_index() {
        let xs = vec![0.0, 3.0, 1.0, 3.0, 2.0];
        let m = max_with_index(&xs);
        assert_eq!(m.index, 1);
        assert_eq!(m.value, 3.0);
    }

    #[test]
    fn empty_sum_is_zero() {
        assert_eq!(sum(&[]), 0.0);
    }
}
