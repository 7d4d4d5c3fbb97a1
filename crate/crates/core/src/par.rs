//! Trial-level data parallelism.
//!
//! With the `parallel` feature the indexed maps fan out over rayon; without
//! it they run in a plain loop. Either way results come back in index order,
//! so output files never depend on scheduling.

use std::sync::Once;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "MATCAP_THREADS";

static INIT: Once = Once::new();

/// Configures the global pool from `MATCAP_THREADS` once per process.
/// Ignored when the feature is off or the pool already exists.
pub fn init_threads() {
    INIT.call_once(|| {
        #[cfg(feature = "parallel")]
        if let Some(n) = threads_from_env() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    });
}

pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// `(0..n).map(f)` collected in order, in parallel when enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        init_threads();
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Always sequential; the reference path for benches and parity tests.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Fallible variant; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}
