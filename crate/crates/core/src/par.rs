//! Execution mode for the data-parallel kernels.
//!
//! With the `parallel` feature the kernels fan out over rayon's global pool;
//! without it every helper here degrades to a plain sequential loop. The mode
//! can also be flipped at runtime (benchmarks compare both). Every helper
//! preserves output order, so results never depend on the schedule.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

const UNSET: u8 = 0;
const SEQ: u8 = 1;
const PAR: u8 = 2;

static MODE: AtomicU8 = AtomicU8::new(UNSET);

/// Whether this build carries the rayon backend.
pub const fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

pub fn set_exec(exec: Exec) {
    let v = match exec {
        Exec::Sequential => SEQ,
        Exec::Parallel => PAR,
    };
    MODE.store(v, Ordering::Relaxed);
}

pub fn exec() -> Exec {
    match MODE.load(Ordering::Relaxed) {
        SEQ => Exec::Sequential,
        PAR if parallel_available() => Exec::Parallel,
        UNSET if parallel_available() => Exec::Parallel,
        _ => Exec::Sequential,
    }
}

/// Evaluates `f(i)` for `i in 0..n`, collecting results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Maps each element of a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Runs `f(chunk_index, chunk)` over disjoint `chunk_len`-sized chunks.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Runs two closures, concurrently when parallel execution is active.
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if exec() == Exec::Parallel {
        return rayon::join(a, b);
    }
    (a(), b())
}
