//! Batch execution helpers: data-parallel by default, with a sequential
//! fallback selected either at compile time (building without the `parallel`
//! feature) or per call (for benchmarking both paths in one binary).
//!
//! Results are collected in input order, so output is deterministic
//! regardless of the mode.

/// Execution mode for batch helpers.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Use rayon when the `parallel` feature is enabled, otherwise sequential.
    #[default]
    Auto,
    /// Force the sequential path.
    Sequential,
}

#[cfg(feature = "parallel")]
pub fn map_indexed<U: Send>(
    mode: Parallelism,
    n: usize,
    f: impl Fn(usize) -> U + Sync + Send,
) -> Vec<U> {
    use rayon::prelude::*;
    match mode {
        Parallelism::Auto => (0..n).into_par_iter().map(f).collect(),
        Parallelism::Sequential => (0..n).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U: Send>(
    _mode: Parallelism,
    n: usize,
    f: impl Fn(usize) -> U + Sync + Send,
) -> Vec<U> {
    (0..n).map(f).collect()
}

/// Map over a slice, preserving order.
pub fn map_slice<T: Sync, U: Send>(
    mode: Parallelism,
    items: &[T],
    f: impl Fn(&T) -> U + Sync + Send,
) -> Vec<U> {
    map_indexed(mode, items.len(), |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_preserve_order() {
        let xs: Vec<u64> = (0..100).collect();
        let a = map_slice(Parallelism::Auto, &xs, |x| x * x);
        let b = map_slice(Parallelism::Sequential, &xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[10], 100);
    }
}
