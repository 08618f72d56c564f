use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable capping worker threads; 0 or unset means one per core.
pub const THREADS_ENV: &str = "ATTNFORGE_THREADS";

pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
    }
}

/// Maps `f` over `items` on a pool sized by [`THREADS_ENV`]. Output order
/// follows input order regardless of scheduling.
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Result<Vec<U>>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.into_par_iter().map(f).collect()))
}
