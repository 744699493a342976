//! Data-parallel execution over independent environment lanes.
//!
//! With the `parallel` feature (default) the work runs on the rayon pool;
//! without it, or with `parallel: false` at runtime, it runs sequentially.
//! Results always come back in index order and every lane owns its own rng
//! streams, so both modes produce bit-identical output — asserted by the
//! determinism tests and compared by the criterion benches.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map a function over mutable items, in parallel when requested and
/// compiled in. Output order follows input order.
pub fn map_indexed_mut<T, R, F>(parallel: bool, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            return items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect();
        }
    }
    let _ = parallel;
    items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Map over a range of indices.
pub fn map_range<R, F>(parallel: bool, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            return (0..n).into_par_iter().map(&f).collect();
        }
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Whether parallel execution is compiled in.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_produce_identical_results() {
        let mut a: Vec<u64> = (0..100).collect();
        let mut b = a.clone();
        let f = |i: usize, v: &mut u64| {
            *v = v.wrapping_mul(0x9e3779b9).rotate_left(i as u32);
            *v
        };
        let ra = map_indexed_mut(true, &mut a, f);
        let rb = map_indexed_mut(false, &mut b, f);
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }
}
