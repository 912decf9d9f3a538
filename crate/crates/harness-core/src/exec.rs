//! Order-preserving map helpers over independent work items.
//!
//! With the `parallel` feature the maps run on the rayon pool; without it
//! they degrade to plain iterators. Both paths return results in input
//! order, so any aggregation done afterwards (sums, argmins, report
//! assembly) is bitwise independent of the worker count. Floating-point
//! reductions must happen on the collected vector, never inside the map.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every index in `0..n` and collects the results in order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Applies `f` to every element of `items` and collects the results in order.
pub fn map_slice<'a, T, U, F>(items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Caps the global worker pool at `n` threads. Call once, before any
/// parallel work runs; later calls fail once the pool exists.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Sequential build: thread caps are a no-op.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> Result<(), String> {
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let out = map_range(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn map_slice_preserves_order() {
        let items: Vec<f64> = (0..57).map(|i| i as f64).collect();
        let out = map_slice(&items, |x| x + 0.5);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, i as f64 + 0.5);
        }
    }
}
