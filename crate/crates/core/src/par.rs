//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) these fan work out over the
//! rayon global pool. Without it, or inside [`sequential`], they run on the
//! calling thread. Output order is always the input order, so results are
//! identical either way.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with every helper in this module pinned to the calling thread.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let previous = FORCE_SEQUENTIAL.with(|flag| flag.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|flag| flag.set(previous));
    out
}

/// True when helpers will use the thread pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|flag| flag.get())
}

/// `items.iter().map(f).collect()`, in parallel when enabled.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Fills `out` in place, one call per element, in parallel when enabled.
pub fn fill<R, F>(out: &mut [R], f: F)
where
    R: Send,
    F: Fn(usize, &mut R) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        // Chunking keeps task overhead small on long, cheap rows.
        let chunk = (out.len() / (4 * rayon::current_num_threads()).max(1)).max(64);
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(c, slice)| {
                for (offset, slot) in slice.iter_mut().enumerate() {
                    f(c * chunk + offset, slot);
                }
            });
        return;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        f(i, slot);
    }
}
