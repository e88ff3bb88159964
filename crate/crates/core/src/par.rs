//! Execution policy for the data-parallel inner loops.

/// How tile-level work inside a kernel call is scheduled.
///
/// Work is always split into the same fixed tiles; the policy only decides
/// whether tiles run on the rayon pool or one after another, so results do
/// not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Run every tile on the calling thread.
    Sequential,
    /// Spread tiles over the current rayon pool. Falls back to sequential
    /// when the crate is built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// Evaluates `f(0..n)` and returns the results in index order.
    pub(crate) fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// True when this build can actually run tiles concurrently.
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Runs `f` on a dedicated pool of `threads` workers.
///
/// Without the `parallel` feature there is no pool and `f` simply runs on
/// the calling thread, which already satisfies a one-thread contract.
pub fn with_threads<R, F>(threads: usize, f: F) -> crate::Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    if threads == 0 {
        return Err(crate::Error::invalid("thread count must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::invalid(format!("cannot build thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(f())
    }
}
