//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these fan out over rayon's global
//! pool; without it they run in order on the calling thread. Results are
//! always returned in input order so callers stay deterministic.

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Map `f` over an integer range, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<R, F>(range: std::ops::Range<u32>, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u32) -> R + Sync + Send,
{
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

/// Map `f` over an integer range, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(range: std::ops::Range<u32>, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u32) -> R + Sync + Send,
{
    range.map(f).collect()
}

/// Sequential reference versions, always available (used by benches and
/// equivalence tests).
pub mod seq {
    /// Sequential [`super::map`].
    pub fn map<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
        items.iter().map(f).collect()
    }

    /// Sequential [`super::map_range`].
    pub fn map_range<R, F: Fn(u32) -> R>(range: std::ops::Range<u32>, f: F) -> Vec<R> {
        range.map(f).collect()
    }
}

/// Run `f` inside a pool limited to `jobs` threads (no-op without `parallel`).
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match jobs {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .unwrap_or_else(|_| panic!("failed to build a {n}-thread pool")),
        _ => f(),
    }
}

/// Run `f` inside a pool limited to `jobs` threads (no-op without `parallel`).
#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R: Send>(_jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}
