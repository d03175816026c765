//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool.
//! Reductions always combine fixed-size chunk sums in index order, so results
//! are bit-identical regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by deterministic reductions.
pub const CHUNK: usize = 256;

/// Execution strategy for the batch entry points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl Default for Mode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

/// Maps `f` over `0..len`, preserving order.
pub fn map_range<T, F>(mode: Mode, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => (0..len).into_par_iter().map(f).collect(),
        _ => (0..len).map(f).collect(),
    }
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<S, T, F>(mode: Mode, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Deterministic sum of `f(i)` for `i in 0..len`.
pub fn sum_range<F>(mode: Mode, len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    let partial = map_range(mode, chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(len);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.into_iter().sum()
}

/// Deterministic componentwise sum of vector-valued `f(i)` of length `dim`.
pub fn sum_vec_range<F>(mode: Mode, len: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    let partial = map_range(mode, chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(len);
        let mut acc = vec![0.0; dim];
        for i in lo..hi {
            for (a, v) in acc.iter_mut().zip(f(i)) {
                *a += v;
            }
        }
        acc
    });
    let mut out = vec![0.0; dim];
    for p in partial {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_agree_across_modes() {
        let f = |i: usize| (i as f64).sin() / (1.0 + i as f64);
        let a = sum_range(Mode::Sequential, 10_000, f);
        let b = sum_range(Mode::Parallel, 10_000, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let v = map_range(Mode::default(), 1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
