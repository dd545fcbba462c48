//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature the items run on a rayon pool; without it they
//! run in order on the calling thread. Results always come back in input order,
//! so output is identical either way.

use crate::error::{Error, Result};

/// Maps `f` over `items` on the calling thread.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `items` on the global rayon pool.
#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Parallel when the feature is on, sequential otherwise.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_parallel(items, f)
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    map_sequential(items, f)
}

/// Like [`map`] but bounded to `jobs` worker threads. `jobs == 0` means the
/// default pool size; `jobs == 1` runs sequentially.
#[cfg(feature = "parallel")]
pub fn map_with_jobs<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match jobs {
        0 => Ok(map_parallel(items, f)),
        1 => Ok(map_sequential(items, f)),
        n => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(|| map_parallel(items, f)))
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_with_jobs<T, R, F>(items: &[T], _jobs: usize, f: F) -> Result<Vec<R>>
where
    F: Fn(&T) -> R,
{
    Ok(map_sequential(items, f))
}

/// Whether this build runs work items concurrently.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
