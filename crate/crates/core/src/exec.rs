//! Serial / data-parallel execution switch.
//!
//! Every parallel kernel in the crate has a serial twin selected at run time
//! through [`ExecMode`]. Without the `parallel` feature, `ExecMode::Parallel`
//! silently runs the serial path. Reductions are always split into fixed-size
//! chunks whose partial sums are combined in chunk order, so results do not
//! depend on the mode or on the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Serial,
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Dof rows per partial sum in chunked reductions.
pub(crate) const REDUCE_ROWS: usize = 1024;

/// Applies `f(chunk_index, chunk)` to consecutive `chunk_len`-sized pieces of `data`.
pub(crate) fn for_each_chunk_mut<T, F>(mode: ExecMode, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = mode;
    data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
}

/// Like [`for_each_chunk_mut`] but with a per-worker scratch value.
pub(crate) fn for_each_chunk_mut_init<T, S, I, F>(
    mode: ExecMode,
    data: &mut [T],
    chunk_len: usize,
    init: I,
    f: F,
) where
    T: Send,
    I: Fn() -> S + Send + Sync,
    F: Fn(&mut S, usize, &mut [T]) + Send + Sync,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each_init(&init, |s, (i, c)| f(s, i, c));
        return;
    }
    let _ = mode;
    let mut s = init();
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(&mut s, i, c));
}

/// Maps `0..n` to a vector, preserving order.
pub(crate) fn map_indexed<R, F>(mode: ExecMode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Per-column reduction over `n_rows` rows of width `batch`.
///
/// `partial(rows, acc)` accumulates rows into `acc` (length `batch`). Partials
/// are combined in ascending chunk order.
pub(crate) fn column_reduce<F>(mode: ExecMode, n_rows: usize, batch: usize, partial: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Send + Sync,
{
    let n_chunks = n_rows.div_ceil(REDUCE_ROWS);
    let parts = map_indexed(mode, n_chunks, |c| {
        let lo = c * REDUCE_ROWS;
        let hi = (lo + REDUCE_ROWS).min(n_rows);
        let mut acc = vec![0.0; batch];
        partial(lo..hi, &mut acc);
        acc
    });
    let mut out = vec![0.0; batch];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}
