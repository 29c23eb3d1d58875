//! Worker-count control for the rayon-backed stages.

use crate::error::{Error, Result};

/// Number of workers used when none is requested.
pub fn available_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `f` on a dedicated pool of `workers` threads; `0` means all cores.
pub fn with_workers<T, F>(workers: usize, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let n = if workers == 0 { available_workers() } else { workers };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    Ok(pool.install(f))
}
