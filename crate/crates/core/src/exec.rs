//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel loop in the crate goes through the helpers here. Work is
//! split into fixed-size chunks whose partial results are combined in chunk
//! order, so the sequential and parallel paths produce bit-identical output
//! regardless of the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for reductions over large node/event sets.
pub const REDUCE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    Sequential,
    /// Rayon work stealing. Falls back to `Sequential` when the crate is
    /// built without the `parallel` feature.
    #[default]
    Parallel,
}

impl ExecPolicy {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }

    /// `f(i)` for `i in 0..n`, collected in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps over a mutable slice, collecting results in order.
    pub fn map_mut<S, T, F>(self, items: &mut [S], f: F) -> Vec<T>
    where
        S: Send,
        T: Send,
        F: Fn(usize, &mut S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items
                .par_iter_mut()
                .enumerate()
                .map(|(i, s)| f(i, s))
                .collect();
        }
        items.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    }

    /// Chunked reduction over `0..n`. `partial` receives a half-open range
    /// and the partials are folded left to right with `combine`.
    pub fn reduce_chunks<T, P, C>(self, n: usize, partial: P, combine: C) -> Option<T>
    where
        T: Send,
        P: Fn(std::ops::Range<usize>) -> T + Sync + Send,
        C: Fn(T, T) -> T,
    {
        let chunks = n.div_ceil(REDUCE_CHUNK);
        let parts = self.map_range(chunks, |c| {
            let start = c * REDUCE_CHUNK;
            partial(start..(start + REDUCE_CHUNK).min(n))
        });
        parts.into_iter().reduce(combine)
    }

    /// Fills `out[i] = f(i)` in fixed chunks.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_chunks_mut(REDUCE_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = f(c * REDUCE_CHUNK + j);
                    }
                });
            return;
        }
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }
}
