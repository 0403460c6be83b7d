//! Data-parallel map with a sequential fallback.
//!
//! `workers == 1` always runs on the calling thread. With the `parallel`
//! feature, `workers == 0` uses the global rayon pool and `workers > 1` a
//! dedicated pool of that size. Output order always matches input order, so
//! results never depend on the worker count.

/// Maps `f` over `0..n`.
pub fn map_indexed<U, F>(n: usize, workers: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if workers != 1 && n > 1 {
            let run = || (0..n).into_par_iter().map(&f).collect();
            if workers == 0 {
                return run();
            }
            match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(pool) => return pool.install(run),
                Err(_) => return run(),
            }
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Maps `f` over a slice.
pub fn map<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_indexed(items.len(), workers, |i| f(&items[i]))
}

/// True when the crate was built with rayon support.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map(&items, 1, |x| x * x);
        for w in [0, 2, 3] {
            assert_eq!(map(&items, w, |x| x * x), seq);
        }
    }
}
