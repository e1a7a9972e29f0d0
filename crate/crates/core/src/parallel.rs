//! Order-preserving data-parallel maps.
//!
//! With the `parallel` feature the maps run on the current rayon pool,
//! otherwise sequentially. Results are always collected in input order and
//! reduced sequentially by the callers, so numeric output is identical in
//! both builds and for any thread count.

/// Sequential implementations, always available.
pub mod seq {
    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..n).map(f).collect()
    }

    pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
    where
        F: Fn(&A) -> T,
    {
        items.iter().map(f).collect()
    }
}

/// Rayon-backed implementations.
#[cfg(feature = "parallel")]
pub mod par {
    use rayon::prelude::*;

    pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }

    pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
    where
        A: Sync,
        T: Send,
        F: Fn(&A) -> T + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }
}

#[cfg(feature = "parallel")]
pub use par::{map_indexed, map_slice};
#[cfg(not(feature = "parallel"))]
pub use seq::{map_indexed, map_slice};

/// Runs `f` inside a pool of `jobs` worker threads (sequentially without the
/// `parallel` feature).
pub fn with_jobs<T, F>(jobs: usize, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
        {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        f()
    }
}
