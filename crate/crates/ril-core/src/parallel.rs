//! Data-parallel helpers with a sequential fallback.
//!
//! With the default `parallel` feature, [`par_map`] fans work out over a
//! rayon pool; without it, the same call degrades to a plain sequential
//! map. [`seq_map`] is always sequential so benchmarks can compare the two
//! on identical workloads. Output order matches input order in both cases,
//! which keeps seeded experiments byte-reproducible regardless of thread
//! count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, in parallel when the `parallel` feature is on.
pub fn par_map<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential reference version of [`par_map`].
pub fn seq_map<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Number of worker threads the parallel paths will use.
///
/// Honors the `RIL_THREADS` cap when set; reports 1 without the feature.
pub fn effective_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Install a global rayon pool capped by the `RIL_THREADS` environment
/// variable. Call once at process start; later calls are ignored.
pub fn init_thread_pool_from_env() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(v) = std::env::var("RIL_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    // Err means a pool is already installed; that is fine.
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let xs = par_map(100, |i| i * i);
        let ys = seq_map(100, |i| i * i);
        assert_eq!(xs, ys);
    }
}
