//! Index-addressed parallel map. Results land at their input index, so the
//! output never depends on how work was scheduled.

/// Evaluates `f(i)` for `i in 0..n` on up to `workers` threads and returns
/// the results in index order. `workers <= 1` runs inline.
pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 1 && n > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("thread pool");
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Number of hardware threads, or 1 when unknown.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let a = map_indexed(1000, 1, |i| i * i);
        let b = map_indexed(1000, 4, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[31], 961);
    }
}
