//! Thin data-parallel layer.
//!
//! Every helper has a rayon implementation (feature `parallel`) and a plain
//! iterator fallback with identical semantics. Callers never reduce across
//! items through these helpers: partial results come back in index order and
//! are folded sequentially, which keeps floating point sums independent of the
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Rows per work item for chunked reductions. Fixed so that partial sums do
/// not depend on the number of threads.
pub const REDUCE_CHUNK: usize = 256;

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
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

/// Map over a slice, keeping order.
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
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

/// Visit disjoint mutable chunks of `data` together with their chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Visit pairs of aligned chunks: `a` in steps of `chunk_a`, `b` in steps of
/// `chunk_b`. Both must produce the same number of chunks.
pub fn for_each_chunk_pair_mut<T, U, F>(
    a: &mut [T],
    chunk_a: usize,
    b: &mut [U],
    chunk_b: usize,
    f: F,
) where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut [U]) + Sync + Send,
{
    assert!(chunk_a > 0 && chunk_b > 0);
    debug_assert_eq!(a.len().div_ceil(chunk_a), b.len().div_ceil(chunk_b));
    #[cfg(feature = "parallel")]
    {
        a.par_chunks_mut(chunk_a)
            .zip(b.par_chunks_mut(chunk_b))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
    #[cfg(not(feature = "parallel"))]
    {
        a.chunks_mut(chunk_a)
            .zip(b.chunks_mut(chunk_b))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
}

/// Split `0..n` into fixed blocks of [`REDUCE_CHUNK`] and compute one partial
/// result per block, returned in block order.
pub fn block_partials<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let blocks = n.div_ceil(REDUCE_CHUNK);
    map_range(blocks, |b| {
        let start = b * REDUCE_CHUNK;
        f(start..(start + REDUCE_CHUNK).min(n))
    })
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
