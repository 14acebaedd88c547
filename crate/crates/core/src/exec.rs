//! Execution mode for data-parallel loops.
//!
//! With the `parallel` feature (default) the batch, probe, sweep and
//! gradient-check loops fan out over rayon's pool. Without it, or after
//! [`set_mode`]`(ExecMode::Sequential)`, every loop runs on the calling
//! thread. Results are identical in both modes: work items are independent
//! and reductions happen afterwards in index order.

use std::sync::atomic::{AtomicBool, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Parallel,
    Sequential,
}

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

pub fn set_mode(mode: ExecMode) {
    SEQUENTIAL.store(mode == ExecMode::Sequential, Ordering::Relaxed);
}

/// The effective mode. Always `Sequential` when built without `parallel`.
pub fn mode() -> ExecMode {
    if cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::Relaxed) {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indices<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode() == ExecMode::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Maps `f` over a slice, returning results in input order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode() == ExecMode::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Runs `f(row_index, row)` over consecutive `width`-sized chunks of `out`.
/// Only goes parallel when `work` (an operation-count estimate) is large
/// enough to amortize the pool dispatch.
pub(crate) fn for_each_row_mut<F>(out: &mut [f64], width: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode() == ExecMode::Parallel && work >= PAR_ROW_THRESHOLD {
        use rayon::prelude::*;
        out.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = work;
    out.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(feature = "parallel")]
const PAR_ROW_THRESHOLD: usize = 1 << 18;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = map_indices(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
        let w = map_slice(&[3, 1, 2], |x| x + 1);
        assert_eq!(w, vec![4, 2, 3]);
    }
}
