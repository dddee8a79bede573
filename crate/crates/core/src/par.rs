//! Deterministic work distribution.
//!
//! Every data-parallel section in the crate goes through [`map_indexed`]:
//! jobs are mapped in index order and results collected in index order, so the
//! output is bit-identical whether the map runs on one thread or many. With
//! the `parallel` feature disabled everything degrades to a plain sequential
//! loop and rayon is not compiled at all.

/// Maps `f` over `items`, returning results in input order.
///
/// `workers == 1` forces the sequential path; `workers == 0` uses the default
/// rayon pool size; any other value runs on a dedicated pool of that size.
pub fn map_indexed<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if workers != 1 {
            use rayon::prelude::*;
            let run = || {
                items
                    .par_iter()
                    .enumerate()
                    .map(|(idx, item)| f(idx, item))
                    .collect()
            };
            return if workers == 0 {
                run()
            } else {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .expect("rayon pool");
                pool.install(run)
            };
        }
    }
    let _ = workers;
    items.iter().enumerate().map(|(idx, item)| f(idx, item)).collect()
}

/// Splits `0..len` into chunks of fixed size, maps each chunk, and folds the
/// partial results **in chunk order**.
///
/// The chunk decomposition depends only on `len` and `chunk`, never on the
/// worker count, so floating-point accumulations done per chunk merge to the
/// same bits regardless of parallelism.
pub fn fold_chunks<R, F, M>(len: usize, chunk: usize, workers: usize, f: F, merge: M) -> Option<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync,
    M: Fn(R, R) -> R,
{
    assert!(chunk > 0);
    if len == 0 {
        return None;
    }
    let ranges: Vec<std::ops::Range<usize>> = (0..len)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(len))
        .collect();
    let parts = map_indexed(&ranges, workers, |_, range| f(range.clone()));
    parts.into_iter().reduce(merge)
}
