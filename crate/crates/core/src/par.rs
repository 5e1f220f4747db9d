//! Data-parallel helpers.
//!
//! With the `parallel` feature the batch loops run on rayon's global pool;
//! without it they fall back to plain iterators. Results are identical
//! either way: every helper preserves input order and reductions are only
//! used with associative, commutative merges.

#[cfg(feature = "parallel")]
use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Runtime switch to the sequential path (benchmarks compare both).
/// A no-op without the `parallel` feature.
pub fn set_sequential(on: bool) {
    #[cfg(feature = "parallel")]
    FORCE_SEQUENTIAL.store(on, Ordering::Relaxed);
    #[cfg(not(feature = "parallel"))]
    let _ = on;
}

pub fn is_parallel() -> bool {
    #[cfg(feature = "parallel")]
    {
        !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

pub fn fold_reduce<T, A, Id, Fold, Merge>(items: &[T], identity: Id, fold: Fold, merge: Merge) -> A
where
    T: Sync,
    A: Send,
    Id: Fn() -> A + Sync + Send,
    Fold: Fn(A, &T) -> A + Sync + Send,
    Merge: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items
            .par_iter()
            .fold(&identity, &fold)
            .reduce(&identity, &merge);
    }
    let _ = &merge;
    items.iter().fold(identity(), fold)
}
