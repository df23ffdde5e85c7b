//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature these run on the rayon global pool. Without
//! it they run in a plain loop. Both paths split work into the same fixed
//! chunks and hand partial results back in chunk order, so floating-point
//! reductions are bit-identical regardless of the thread count or feature.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Instances per reduction chunk. Fixed so results never depend on threads.
pub const CHUNK: usize = 256;

/// Ordered map over `0..n`.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Ordered map over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
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

/// Folds `0..n` in fixed chunks of [`CHUNK`] and returns one partial per
/// chunk, in chunk order. Callers combine the partials sequentially.
pub fn chunked_fold<A, I, F>(n: usize, identity: I, fold: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, usize) -> A + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    map_indices(chunks, |c| {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(n);
        (start..end).fold(identity(), &fold)
    })
}

/// Sum of `f(i)` over `0..n` with a thread-count independent order.
pub fn sum_indices<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    chunked_fold(n, || 0.0, |acc, i| acc + f(i)).into_iter().sum()
}
