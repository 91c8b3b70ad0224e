//! Data-parallel execution layer. With the `parallel` feature (default) work
//! items map over a rayon pool; without it the same items run sequentially.
//! Work is always partitioned identically and reduced in index order, so both
//! paths produce bit-identical results.

/// Applies `f` to 0..count and collects the results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}

/// Runs `f` on a pool of `threads` workers (None = library default). Without
/// the `parallel` feature the closure just runs on the current thread.
#[cfg(feature = "parallel")]
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool construction")
            .install(f),
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<T: Send>(_threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    f()
}

/// True when the crate was built with the rayon-backed execution layer.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
