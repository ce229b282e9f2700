//! Data-parallel map used by the ensemble, attribution and experiment code.
//!
//! With the `parallel` feature the work runs on the current rayon pool; a
//! pool of one thread, or a build without the feature, runs sequentially.
//! Results always come back in input order, so callers that merge them
//! get the same output regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of worker threads the next `map` call may use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if items.len() > 1 && rayon::current_num_threads() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n > 1 && rayon::current_num_threads() > 1 {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}
